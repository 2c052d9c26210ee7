use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coin::Coin;

/// A fixed-length string of bits, printed and parsed as ASCII `0`/`1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<bool>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid bit character {0:?} at position {1}")]
pub struct ParseBitsError(pub char, pub usize);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        BitString(bits)
    }

    pub fn zeros(n: usize) -> Self {
        BitString(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        BitString(vec![true; n])
    }

    /// Uniformly random string of length `n`.
    pub fn random(n: usize, coin: &mut dyn Coin) -> Self {
        BitString((0..n).map(|_| coin.fair_bit()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, b: bool) {
        self.0[i] = b;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn push(&mut self, b: bool) {
        self.0.push(b);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn parity(&self) -> bool {
        self.weight() % 2 == 1
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        BitString(v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_string().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParseBitsError> {
        bytes
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                b'0' => Ok(false),
                b'1' => Ok(true),
                other => Err(ParseBitsError(other as char, i)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl From<Vec<bool>> for BitString {
    fn from(v: Vec<bool>) -> Self {
        BitString(v)
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitString(iter.into_iter().collect())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BitString::from_bytes(s.as_bytes())
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let b: BitString = "01101".parse().unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.weight(), 3);
        assert_eq!(b.to_string(), "01101");
        assert_eq!("".parse::<BitString>().unwrap().len(), 0);
        assert_eq!("0a1".parse::<BitString>(), Err(ParseBitsError('a', 1)));
    }

    #[test]
    fn json_as_string() {
        let b: BitString = "101".parse().unwrap();
        let j = serde_json::to_string(&b).unwrap();
        assert_eq!(j, "\"101\"");
        assert_eq!(serde_json::from_str::<BitString>(&j).unwrap(), b);
    }
}
