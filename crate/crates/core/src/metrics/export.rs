//! Report and PCA export files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::model::PcaExportRow;
use crate::Result;

/// Serialize a report as compact JSON plus a trailing newline. Field order
/// is fixed by the struct definitions, so identical values produce
/// byte-identical files.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// CSV with header `domain,bag_id,instance_id,true_label,pred_label,pc1,pc2`.
/// Labels on disk use the clinical 0-based convention; a missing true
/// label is an empty field.
pub fn write_pca_csv(path: &Path, rows: &[PcaExportRow]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "domain,bag_id,instance_id,true_label,pred_label,pc1,pc2")?;
    for r in rows {
        let true_label = match r.true_label {
            Some(l) => (l - 1).to_string(),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.domain.as_str(),
            r.bag_id,
            r.instance_id,
            true_label,
            r.pred_label - 1,
            r.pc1,
            r.pc2
        )?;
    }
    w.flush()?;
    Ok(())
}
