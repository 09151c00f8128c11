use std::io::Write;

use serde::Serialize;

use crate::numfmt::sig12;
use crate::petri::NetKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: NetKind,
    pub place_names: Vec<String>,
    pub times: Vec<f64>,
    pub markings: Vec<Vec<f64>>,
    /// Transitions whose flow was scaled down to keep a place non-negative,
    /// summed over steps. Always 0 for SPN runs.
    pub clipping_events: usize,
    pub rng_seed: Option<u64>,
    pub rng_stream: Option<u64>,
    pub rng_algorithm: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.place_names.iter().position(|p| p == name)
    }

    /// Time series of one place.
    pub fn series(&self, place: &str) -> Option<Vec<f64>> {
        let i = self.place_index(place)?;
        Some(self.markings.iter().map(|m| m[i]).collect())
    }

    pub fn final_marking(&self) -> Option<&[f64]> {
        self.markings.last().map(Vec::as_slice)
    }

    /// Keep the first sample at or after each multiple of `every`, plus the
    /// final sample.
    pub fn thinned(&self, every: f64) -> Trajectory {
        let mut keep = Vec::new();
        let mut next = 0.0;
        let mut k = 0u64;
        for (i, &t) in self.times.iter().enumerate() {
            if t >= next - 1e-9 * every {
                keep.push(i);
                while next <= t + 1e-9 * every {
                    k += 1;
                    next = k as f64 * every;
                }
            }
        }
        if let Some(last) = self.times.len().checked_sub(1) {
            if keep.last() != Some(&last) {
                keep.push(last);
            }
        }
        Trajectory {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            markings: keep.iter().map(|&i| self.markings[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `t,<places>` and numbers at 12 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.place_names.iter().cloned());
        out.write_record(&header)?;
        for (t, m) in self.times.iter().zip(&self.markings) {
            let mut row = vec![sig12(*t)];
            row.extend(m.iter().map(|v| sig12(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
