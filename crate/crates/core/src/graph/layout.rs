use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STANDARD_59: &str = include_str!("../../data/montage_10_10_59.csv");

/// Named electrodes with 3-D scalp coordinates in millimetres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    names: Vec<String>,
    positions: Vec<[f64; 3]>,
}

#[derive(Deserialize, Serialize)]
struct MontageRow {
    name: String,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
}

impl ElectrodeLayout {
    pub fn new(names: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if names.len() != positions.len() {
            return Err(Error::config(format!(
                "{} names but {} positions",
                names.len(),
                positions.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::config(format!("duplicate electrode `{n}`")));
            }
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite electrode coordinate"));
        }
        Ok(ElectrodeLayout { names, positions })
    }

    /// 59-channel 10-10 montage on an 85 mm spherical head (x right,
    /// y anterior, z up).
    pub fn standard_10_10() -> Self {
        Self::from_csv_reader(STANDARD_59.as_bytes()).expect("bundled montage is valid")
    }

    /// Reads `name,x_mm,y_mm,z_mm` rows.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["name", "x_mm", "y_mm", "z_mm"] {
            return Err(Error::config(format!("montage header must be name,x_mm,y_mm,z_mm, got {headers:?}")));
        }
        let (mut names, mut positions) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let r: MontageRow = row?;
            names.push(r.name);
            positions.push([r.x_mm, r.y_mm, r.z_mm]);
        }
        Self::new(names, positions)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (name, p) in self.names.iter().zip(&self.positions) {
            w.serialize(MontageRow {
                name: name.clone(),
                x_mm: p[0],
                y_mm: p[1],
                z_mm: p[2],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Layout restricted to `names`, in that order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mut out_names = Vec::with_capacity(names.len());
        let mut out_pos = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            let i = self
                .index_of(n)
                .ok_or_else(|| Error::config(format!("channel `{n}` not in montage")))?;
            out_names.push(n.to_string());
            out_pos.push(self.positions[i]);
        }
        Self::new(out_names, out_pos)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// Indices of the other electrodes strictly closer than `radius_mm`.
    pub fn neighbors(&self, i: usize, radius_mm: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| j != i && self.distance(i, j) < radius_mm)
            .collect()
    }

    /// Azimuthal equidistant projection onto the plane, centred on the
    /// vertex: polar angle from +z becomes the radius, azimuth is kept.
    pub fn project_2d(&self) -> Vec<[f64; 2]> {
        self.positions
            .iter()
            .map(|p| {
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let polar = (p[2] / r).clamp(-1.0, 1.0).acos();
                let az = p[0].atan2(p[1]);
                [polar * az.sin(), polar * az.cos()]
            })
            .collect()
    }
}
