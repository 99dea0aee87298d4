use serde::Serialize;

use super::EpochRecord;
use crate::error::{Error, Result};
use crate::nncore::Checkpoint;

/// Skip mass of one outer block: `λ0 + λ1·λ2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaRow {
    /// `None` for the final weights.
    pub epoch: Option<usize>,
    pub block: usize,
    pub lambdas: [f64; 3],
    pub skip_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaReport {
    pub rows: Vec<LambdaRow>,
}

impl LambdaReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,block,l0,l1,l2,skip_mass\n");
        for r in &self.rows {
            let e = r.epoch.map(|e| e.to_string()).unwrap_or_else(|| "final".into());
            s.push_str(&format!(
                "{e},{},{},{},{},{}\n",
                r.block, r.lambdas[0], r.lambdas[1], r.lambdas[2], r.skip_mass
            ));
        }
        s
    }
}

fn row(epoch: Option<usize>, block: usize, l: [f64; 3]) -> LambdaRow {
    LambdaRow {
        epoch,
        block,
        lambdas: l,
        skip_mass: l[0] + l[1] * l[2],
    }
}

fn scalar(ck: &Checkpoint, name: &str) -> Option<f64> {
    ck.values
        .iter()
        .find(|(n, _)| n == name)
        .and_then(|(_, t)| (t.len() == 1).then(|| t.data()[0]))
}

/// Per-block skip mass for every logged epoch, followed by the final weights.
pub fn lambda_report(ck: &Checkpoint) -> Result<LambdaReport> {
    let mut finals = Vec::new();
    for b in 0.. {
        let p = format!("desc.outer{b}");
        let l0 = scalar(ck, &format!("{p}.lambda0"));
        let l1 = scalar(ck, &format!("{p}.inner1.lambda"));
        let l2 = scalar(ck, &format!("{p}.inner2.lambda"));
        match (l0, l1, l2) {
            (Some(a), Some(b), Some(c)) => finals.push([a, b, c]),
            _ => break,
        }
    }
    if finals.is_empty() {
        return Err(Error::Input("checkpoint has no λ parameters".into()));
    }
    let log: Vec<EpochRecord> = if ck.header.history.is_null() {
        Vec::new()
    } else {
        serde_json::from_value(ck.header.history.clone()).unwrap_or_default()
    };
    let mut rows = Vec::new();
    for rec in &log {
        for (b, l) in rec.lambdas.iter().enumerate() {
            rows.push(row(Some(rec.epoch), b, *l));
        }
    }
    for (b, l) in finals.into_iter().enumerate() {
        rows.push(row(None, b, l));
    }
    Ok(LambdaReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchnet::{MatchNet, MatchNetConfig, Mode};
    use crate::nncore::{ParamSet, Tensor};

    fn small() -> MatchNet {
        MatchNet::new(
            MatchNetConfig {
                mode: Mode::Fast,
                features: 2,
                decision_width: 4,
                decision_layers: 1,
                ..Default::default()
            },
            1,
        )
    }

    #[test]
    fn skip_mass_formula() {
        let r = row(None, 0, [0.5, 0.2, 0.1]);
        assert!((r.skip_mass - 0.52).abs() < 1e-15);
    }

    #[test]
    fn fresh_network_reports_ones() {
        let net = small();
        let rep = lambda_report(&net.to_checkpoint(serde_json::Value::Null)).unwrap();
        assert_eq!(rep.rows.len(), 4);
        for r in &rep.rows {
            assert_eq!(r.lambdas, [1.0; 3]);
            assert_eq!(r.skip_mass, 2.0);
        }
    }

    #[test]
    fn history_rows_come_first() {
        let net = small();
        let log = vec![EpochRecord {
            epoch: 1,
            loss: 0.3,
            lambdas: vec![[0.5, 0.2, 0.1]; 4],
        }];
        let ck = net.to_checkpoint(serde_json::to_value(&log).unwrap());
        let rep = lambda_report(&ck).unwrap();
        assert_eq!(rep.rows.len(), 8);
        assert_eq!(rep.rows[0].epoch, Some(1));
        assert!((rep.rows[3].skip_mass - 0.52).abs() < 1e-15);
        assert!(rep.to_csv().lines().nth(5).unwrap().starts_with("final,0,"));
    }

    #[test]
    fn checkpoint_without_lambdas_is_input_error() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros(&[2]));
        let ck = Checkpoint::from_params(
            "matchnet",
            serde_json::Value::Null,
            vec![],
            &ps,
            serde_json::Value::Null,
        );
        assert!(matches!(lambda_report(&ck), Err(Error::Input(_))));
    }
}
