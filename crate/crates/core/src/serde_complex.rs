//! Serde helpers for complex values.
//!
//! Poses use `{"re": .., "im": ..}` objects; point lists use `[x, y]` pairs.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct ReIm {
    re: f64,
    im: f64,
}

pub mod object {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        ReIm { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let ReIm { re, im } = ReIm::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

pub mod pairs {
    use super::*;

    pub fn serialize<S: Serializer>(points: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(points.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[x, y]| Complex64::new(x, y)).collect())
    }
}

pub mod optional_pairs {
    use super::*;

    pub fn serialize<S: Serializer>(points: &[Option<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(points.iter().map(|z| z.map(|z| [z.re, z.im])))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Option<Complex64>>, D::Error> {
        let raw = Vec::<Option<[f64; 2]>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|z| z.map(|[x, y]| Complex64::new(x, y)))
            .collect())
    }
}
