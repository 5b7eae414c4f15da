use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ModelError;

pub const SAMPLES_CSV_HEADER: &str = "tier,impl,binding,concurrency,throughput,payload_kb,cpu_pct,mem_mb";

/// One load-test observation of a single service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub tier: String,
    pub implementation_type: String,
    pub binding_type: String,
    pub concurrency: f64,
    pub throughput: f64,
    pub payload_total_kb: f64,
    pub measured_cpu_pct: f64,
    pub measured_mem_mb: f64,
}

impl CalibrationSample {
    pub(crate) fn is_valid(&self) -> bool {
        [self.concurrency, self.throughput, self.payload_total_kb, self.measured_cpu_pct, self.measured_mem_mb]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    tier: String,
    #[serde(rename = "impl")]
    implementation: String,
    binding: String,
    concurrency: f64,
    throughput: f64,
    payload_kb: f64,
    cpu_pct: f64,
    mem_mb: f64,
}

/// Parses the calibration CSV. The header must match [`SAMPLES_CSV_HEADER`].
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| ModelError::Csv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SAMPLES_CSV_HEADER {
        return Err(ModelError::Csv(format!("expected header `{SAMPLES_CSV_HEADER}`")));
    }
    rdr.deserialize::<Row>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| ModelError::Csv(format!("row {}: {e}", i + 1)))?;
            Ok(CalibrationSample {
                tier: row.tier,
                implementation_type: row.implementation,
                binding_type: row.binding,
                concurrency: row.concurrency,
                throughput: row.throughput,
                payload_total_kb: row.payload_kb,
                measured_cpu_pct: row.cpu_pct,
                measured_mem_mb: row.mem_mb,
            })
        })
        .collect()
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[CalibrationSample]) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(Row {
            tier: s.tier.clone(),
            implementation: s.implementation_type.clone(),
            binding: s.binding_type.clone(),
            concurrency: s.concurrency,
            throughput: s.throughput,
            payload_kb: s.payload_total_kb,
            cpu_pct: s.measured_cpu_pct,
            mem_mb: s.measured_mem_mb,
        })
        .map_err(|e| ModelError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| ModelError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let text = format!("{SAMPLES_CSV_HEADER}\nperflab,java,soap_http,100,100,64,6.5,322\n");
        let got = read_samples_csv(text.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload_total_kb, 64.0);
        assert_eq!(got[0].measured_mem_mb, 322.0);

        let mut out = Vec::new();
        write_samples_csv(&mut out, &got).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            text.replace("6.5,322", "6.5,322.0").replace("100,100,64", "100.0,100.0,64.0")
        );
    }

    #[test]
    fn rejects_wrong_header_and_bad_numbers() {
        assert!(read_samples_csv("a,b\n1,2\n".as_bytes()).is_err());
        let text = format!("{SAMPLES_CSV_HEADER}\nperflab,java,soap_http,x,100,64,6.5,322\n");
        let err = read_samples_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }
}
