//! Model file: a `#tckim-model v1` line followed by the JSON-encoded
//! [`TrainedKernel`]. Floats are written in shortest round-trip form and
//! parsed exactly, so a reloaded model reproduces every kernel value.

use std::path::Path;

use super::TrainedKernel;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "#tckim-model v1";

pub fn write_model(trained: &TrainedKernel) -> Result<String> {
    if trained.models.is_empty() {
        return Err(Error::invalid(
            "refusing to save an ensemble without trained base models",
        ));
    }
    let body = serde_json::to_string(trained).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{MODEL_MAGIC}\n{body}\n"))
}

pub fn read_model(text: &str) -> Result<TrainedKernel> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    if first != MODEL_MAGIC {
        return match first.strip_prefix("#tckim-model ") {
            Some(version) => Err(Error::Format(format!(
                "unsupported model version `{version}`"
            ))),
            None => Err(Error::Format("not a model file (bad magic line)".into())),
        };
    }
    let trained: TrainedKernel =
        serde_json::from_str(body).map_err(|e| Error::Format(format!("corrupt model: {e}")))?;
    if trained.models.is_empty() {
        return Err(Error::Format(
            "model file contains no trained base models".into(),
        ));
    }
    Ok(trained)
}

pub fn save_model(trained: &TrainedKernel, path: impl AsRef<Path>) -> Result<()> {
    let text = write_model(trained)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedKernel> {
    read_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{MtsDataset, MtsRecord};
    use crate::kernel::{kernel_test, train_tck_im, ComponentRange, EnsembleConfig};

    fn trained() -> (TrainedKernel, MtsDataset) {
        let records = (0..8)
            .map(|i| {
                let x = i as f64;
                MtsRecord::from_rows(
                    i.to_string(),
                    &[vec![
                        Some(x.sin()),
                        None,
                        Some(0.3 * x),
                        Some(1.0 / (1.0 + x)),
                        None,
                        Some(x.cos()),
                    ]],
                )
                .unwrap()
            })
            .collect();
        let d = MtsDataset::unnamed(records, None, 1, 6).unwrap();
        let c = EnsembleConfig {
            q_inits: 2,
            components: Some(ComponentRange { min: 2, max: 2 }),
            seed: 3,
            ..Default::default()
        };
        (train_tck_im(&d, &c).unwrap().0, d)
    }

    #[test]
    fn roundtrip_is_exact() {
        let (t, d) = trained();
        let back = read_model(&write_model(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(
            kernel_test(&back, &d).unwrap(),
            kernel_test(&t, &d).unwrap()
        );
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let (t, _) = trained();
        let text = write_model(&t)
            .unwrap()
            .replacen("#tckim-model v1", "#tckim-model v9", 1);
        assert!(matches!(read_model(&text), Err(Error::Format(_))));
        assert!(matches!(read_model("garbage"), Err(Error::Format(_))));
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let (mut t, _) = trained();
        let text = write_model(&t).unwrap();
        t.models.clear();
        assert!(write_model(&t).is_err());
        let emptied = text.replace(&serde_json::to_string(&trained().0.models).unwrap(), "[]");
        assert!(matches!(read_model(&emptied), Err(Error::Format(_))));
    }
}
