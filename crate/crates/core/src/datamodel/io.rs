//! JSON Lines dataset files.
//!
//! Layout: one header line `{"k": K, "d_in": D}` followed by one bag per
//! line. Labels on disk use the clinical `0..K-1` convention; loading
//! converts to the internal `1..=K` and validates every invariant.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bag, Domain, DomainDataset, Instance, SeverityLabel};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    k: usize,
    d_in: usize,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: String,
    features: Vec<f64>,
    label: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct RawBag {
    bag_id: String,
    domain: String,
    bag_label: i64,
    instances: Vec<RawInstance>,
}

pub fn save_dataset(ds: &DomainDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = Header { k: ds.k, d_in: ds.d_in };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for bag in &ds.bags {
        let raw = RawBag {
            bag_id: bag.bag_id.clone(),
            domain: bag.domain.as_str().to_string(),
            bag_label: bag.bag_label.to_clinical() as i64,
            instances: bag
                .instances
                .iter()
                .map(|inst| RawInstance {
                    id: inst.id.clone(),
                    features: inst.features.clone(),
                    label: inst.label.map(|l| l.to_clinical() as i64),
                })
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&raw)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DomainDataset> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Validation(format!("{}: missing header line", path.display())))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.k < 2 {
        return Err(Error::Validation(format!("{}: header k must be >= 2", path.display())));
    }
    let mut domain: Option<Domain> = None;
    let mut bags = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawBag = serde_json::from_str(&line).map_err(|e| {
            Error::Validation(format!("{} line {}: {e}", path.display(), lineno + 2))
        })?;
        let bag_domain = Domain::parse(&raw.domain)?;
        match domain {
            None => domain = Some(bag_domain),
            Some(d) if d != bag_domain => {
                return Err(Error::Validation(format!(
                    "bag '{}' is tagged {} in a file of {} bags",
                    raw.bag_id,
                    bag_domain.as_str(),
                    d.as_str()
                )));
            }
            _ => {}
        }
        let bag_label = SeverityLabel::from_clinical(raw.bag_label, header.k)
            .map_err(|e| Error::Validation(format!("bag '{}': {e}", raw.bag_id)))?;
        let mut instances = Vec::with_capacity(raw.instances.len());
        for ri in raw.instances {
            let label = match ri.label {
                Some(v) => Some(
                    SeverityLabel::from_clinical(v, header.k)
                        .map_err(|e| Error::Validation(format!("instance '{}': {e}", ri.id)))?,
                ),
                None => None,
            };
            instances.push(Instance { id: ri.id, features: ri.features, label });
        }
        bags.push(Bag {
            bag_id: raw.bag_id,
            domain: bag_domain,
            instances,
            bag_label,
        });
    }
    let domain = domain
        .ok_or_else(|| Error::Validation(format!("{}: dataset has no bags", path.display())))?;
    let ds = DomainDataset {
        domain,
        k: header.k,
        d_in: header.d_in,
        bags,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{generate_synthetic_domains, ShiftConfig};

    #[test]
    fn round_trip_is_lossless() {
        let cfg = ShiftConfig { n_bags: 5, ..Default::default() };
        let (source, target) = generate_synthetic_domains(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for ds in [source, target] {
            let path = dir.path().join(format!("{}.jsonl", ds.domain.as_str()));
            save_dataset(&ds, &path).unwrap();
            let loaded = load_dataset(&path).unwrap();
            assert_eq!(ds, loaded);
        }
    }

    #[test]
    fn rejects_bag_label_below_instance_max() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        // bag_label 1 (clinical) but instances labeled {0, 2}.
        std::fs::write(
            &path,
            concat!(
                "{\"k\":4,\"d_in\":1}\n",
                "{\"bag_id\":\"b0\",\"domain\":\"source\",\"bag_label\":1,\"instances\":[",
                "{\"id\":\"i0\",\"features\":[0.0],\"label\":0},",
                "{\"id\":\"i1\",\"features\":[0.1],\"label\":2}]}\n"
            ),
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("b0"), "{err}");
    }

    #[test]
    fn rejects_wrong_feature_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"k\":4,\"d_in\":16}\n",
                "{\"bag_id\":\"b0\",\"domain\":\"source\",\"bag_label\":0,\"instances\":[",
                "{\"id\":\"i0\",\"features\":[0.0,0.0],\"label\":0}]}\n"
            ),
        )
        .unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn rejects_unlabeled_source_instance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"k\":4,\"d_in\":1}\n",
                "{\"bag_id\":\"b0\",\"domain\":\"source\",\"bag_label\":0,\"instances\":[",
                "{\"id\":\"i0\",\"features\":[0.0],\"label\":null}]}\n"
            ),
        )
        .unwrap();
        assert!(load_dataset(&path).is_err());
    }

    #[test]
    fn target_instances_may_be_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ok.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"k\":4,\"d_in\":1}\n",
                "{\"bag_id\":\"b0\",\"domain\":\"target\",\"bag_label\":2,\"instances\":[",
                "{\"id\":\"i0\",\"features\":[0.5],\"label\":null}]}\n"
            ),
        )
        .unwrap();
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.domain, Domain::Target);
        assert!(ds.bags[0].instances[0].label.is_none());
    }
}
