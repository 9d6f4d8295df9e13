use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_num;

/// One measurement of one marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub marker: String,
    pub time: f64,
    pub y: f64,
    pub x_bin: f64,
    pub x_con: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: String,
    pub observations: Vec<Observation>,
}

/// Long-format longitudinal data, grouped by individual in order of first
/// appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LongitudinalDataset {
    pub individuals: Vec<Individual>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    marker: String,
    time: f64,
    y: f64,
    #[serde(default)]
    x_bin: Option<f64>,
    #[serde(default)]
    x_con: Option<f64>,
}

impl LongitudinalDataset {
    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_observations(&self) -> usize {
        self.individuals.iter().map(|i| i.observations.len()).sum()
    }

    /// Reads CSV with header `id,marker,time,y[,x_bin][,x_con]`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut out = Self::default();
        for (line, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Data(format!("row {}: {e}", line + 2)))?;
            let obs = Observation {
                marker: row.marker,
                time: row.time,
                y: row.y,
                x_bin: row.x_bin.unwrap_or(0.0),
                x_con: row.x_con.unwrap_or(0.0),
            };
            if ![obs.time, obs.y, obs.x_bin, obs.x_con].iter().all(|v| v.is_finite()) {
                return Err(Error::Data(format!("row {}: non-finite value", line + 2)));
            }
            let slot = *index.entry(row.id.clone()).or_insert_with(|| {
                out.individuals.push(Individual {
                    id: row.id.clone(),
                    observations: Vec::new(),
                });
                out.individuals.len() - 1
            });
            out.individuals[slot].observations.push(obs);
        }
        if out.individuals.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,marker,time,y,x_bin,x_con")?;
        for ind in &self.individuals {
            for o in &ind.observations {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    ind.id,
                    o.marker,
                    fmt_num(o.time),
                    fmt_num(o.y),
                    fmt_num(o.x_bin),
                    fmt_num(o.x_con)
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}
