//! File formats and dataset directories.
//!
//! - `graph.edges` — one `u v` pair per line, whitespace separated, `#`
//!   comments ignored.
//! - `features.bin` — magic `GFGD`, u32 version = 1, u64 rows, u64 cols,
//!   then little-endian f32 data, row-major. `features.csv` (one row of
//!   comma-separated values per vertex) is accepted on load.
//! - `labels.csv` / `split.csv` — headered single-column CSVs.
//! - `meta.json` — counts, dims, and the generator config if any.
//! - Parameter checkpoints — magic `GFPM`, u32 version = 1, u32 tensor
//!   count, then per tensor u32 rank, u64 dims, little-endian f32 data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, SbmConfig};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph, Labels, Role, SplitMask};
use crate::model::ModelParams;

const FEATURES_MAGIC: &[u8; 4] = b"GFGD";
const PARAMS_MAGIC: &[u8; 4] = b"GFPM";
const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------- edges

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut out = String::new();
    out.push_str("# undirected edge list: one `u v` pair per line\n");
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_edge_list(path: &Path, num_vertices: usize) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u32> {
            tok.ok_or_else(|| {
                Error::Format(format!("{}:{}: expected `u v`", path.display(), lineno + 1))
            })?
            .parse()
            .map_err(|_| {
                Error::Format(format!(
                    "{}:{}: not a vertex id",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Format(format!(
                "{}:{}: trailing tokens",
                path.display(),
                lineno + 1
            )));
        }
        edges.push((u, v));
    }
    Graph::from_edge_list(&edges, num_vertices)
}

// -------------------------------------------------------------- features

pub fn write_features_bin(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(24 + features.data().len() * 4);
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u64).to_le_bytes());
    for &v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features_bin(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path.display().to_string());
    let magic = r.take(4)?;
    if magic != FEATURES_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
    }
    r.expect_end()?;
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn write_features_csv(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..features.rows() {
        let row: Vec<String> = features.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f32>, _> =
            line.split(',').map(|t| t.trim().parse()).collect();
        rows.push(row.map_err(|_| {
            Error::Format(format!(
                "{}:{}: bad feature value",
                path.display(),
                lineno + 1
            ))
        })?);
    }
    DenseMatrix::from_rows(&rows)
}

// --------------------------------------------------------- labels / split

pub fn write_labels_csv(path: &Path, labels: &Labels) -> Result<()> {
    let mut out = String::from("label\n");
    for &l in labels.values() {
        out.push_str(&format!("{l}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels_csv(path: &Path, num_classes: usize) -> Result<Labels> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || (lineno == 0 && t == "label") {
            continue;
        }
        values.push(t.parse().map_err(|_| {
            Error::Format(format!("{}:{}: bad label", path.display(), lineno + 1))
        })?);
    }
    Labels::new(values, num_classes)
}

pub fn write_split_csv(path: &Path, split: &SplitMask) -> Result<()> {
    let mut out = String::from("role\n");
    for &r in split.roles() {
        out.push_str(r.as_str());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_split_csv(path: &Path) -> Result<SplitMask> {
    let text = fs::read_to_string(path)?;
    let mut roles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || (lineno == 0 && t == "role") {
            continue;
        }
        roles.push(Role::parse(t)?);
    }
    Ok(SplitMask::new(roles))
}

// --------------------------------------------------------- dataset dirs

/// `meta.json` contents of a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub split_counts: SplitCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<SbmConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn write_dataset_dir(dir: &Path, d: &Dataset, generator: Option<&SbmConfig>) -> Result<()> {
    d.validate()?;
    fs::create_dir_all(dir)?;
    write_edge_list(&dir.join("graph.edges"), &d.graph)?;
    write_features_bin(&dir.join("features.bin"), &d.features)?;
    write_labels_csv(&dir.join("labels.csv"), &d.labels)?;
    write_split_csv(&dir.join("split.csv"), &d.split)?;
    let meta = DatasetMeta {
        num_vertices: d.graph.num_vertices(),
        num_edges: d.graph.num_edges(),
        feature_dim: d.features.cols(),
        num_classes: d.labels.num_classes(),
        split_counts: SplitCounts {
            train: d.split.count(Role::Train),
            val: d.split.count(Role::Val),
            test: d.split.count(Role::Test),
        },
        generator: generator.cloned(),
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

pub fn read_dataset_meta(dir: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(dir.join("meta.json"))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_dataset_dir(dir: &Path) -> Result<Dataset> {
    let meta = read_dataset_meta(dir)?;
    let graph = read_edge_list(&dir.join("graph.edges"), meta.num_vertices)?;
    let bin = dir.join("features.bin");
    let features = if bin.exists() {
        read_features_bin(&bin)?
    } else {
        read_features_csv(&dir.join("features.csv"))?
    };
    let labels = read_labels_csv(&dir.join("labels.csv"), meta.num_classes)?;
    let split = read_split_csv(&dir.join("split.csv"))?;
    let d = Dataset {
        graph,
        features,
        labels,
        split,
    };
    d.validate()?;
    Ok(d)
}

// ------------------------------------------------------ parameter bytes

/// Encode parameters in the checkpoint layout (`GFPM`).
pub fn params_to_bytes(params: &ModelParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for w in &params.layers {
        out.extend_from_slice(&2u32.to_le_bytes()); // rank
        out.extend_from_slice(&(w.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(w.cols() as u64).to_le_bytes());
        for &v in w.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = ByteReader::new(bytes, "params".to_string());
    if r.take(4)? != PARAMS_MAGIC {
        return Err(Error::Format("params: bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "params: unsupported version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for t in 0..count {
        let rank = r.u32()? as usize;
        if rank != 2 {
            return Err(Error::Format(format!(
                "params: tensor {t} has rank {rank}, expected 2"
            )));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
        }
        layers.push(DenseMatrix::from_vec(rows, cols, data)?);
    }
    r.expect_end()?;
    Ok(ModelParams { layers })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams<f32>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&params_to_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    params_from_bytes(&bytes)
}

// -------------------------------------------------------- run artifacts

/// One `epochs.csv` row per epoch: `epoch, train_loss, val_f1, test_f1,
/// wall_time_s, bytes_exchanged`; absent measurements stay empty.
pub fn write_epochs_csv(path: &Path, reports: &[crate::train::EpochReport]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_f1,test_f1,wall_time_s,bytes_exchanged\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            opt(r.train_loss),
            opt(r.val_f1),
            opt(r.test_f1),
            r.wall_time_s,
            r.bytes_exchanged
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_epochs_csv(path: &Path) -> Result<Vec<crate::train::EpochReport>> {
    let text = fs::read_to_string(path)?;
    let mut reports = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "{}:{}: expected 6 columns",
                path.display(),
                lineno + 1
            )));
        }
        let bad = |col: &str| {
            Error::Format(format!("{}:{}: bad {col}", path.display(), lineno + 1))
        };
        let opt = |s: &str, col: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(col))
            }
        };
        reports.push(crate::train::EpochReport {
            epoch: fields[0].parse().map_err(|_| bad("epoch"))?,
            train_loss: opt(fields[1], "train_loss")?,
            val_f1: opt(fields[2], "val_f1")?,
            test_f1: opt(fields[3], "test_f1")?,
            wall_time_s: fields[4].parse().map_err(|_| bad("wall_time_s"))?,
            bytes_exchanged: fields[5].parse().map_err(|_| bad("bytes_exchanged"))?,
        });
    }
    Ok(reports)
}

/// One sweep cell: worker count x overlap, aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub m: usize,
    pub overlap: f64,
    pub overhead: f64,
    pub mean_test_f1: f64,
    pub std_test_f1: f64,
    pub mean_epochs_to_converge: f64,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out =
        String::from("m,overlap,overhead,mean_test_f1,std_test_f1,mean_epochs_to_converge\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m, r.overlap, r.overhead, r.mean_test_f1, r.std_test_f1, r.mean_epochs_to_converge
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "{}:{}: expected 6 columns",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad number", path.display(), lineno + 1))
            })
        };
        rows.push(SummaryRow {
            m: fields[0].parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad m", path.display(), lineno + 1))
            })?,
            overlap: parse(1)?,
            overhead: parse(2)?,
            mean_test_f1: parse(3)?,
            std_test_f1: parse(4)?,
            mean_epochs_to_converge: parse(5)?,
        });
    }
    Ok(rows)
}

/// Provenance of every local vertex of an extended partition:
/// `local_id, global_id, source_partition, is_core`.
pub fn write_provenance_csv(path: &Path, part: &crate::approx::ExtendedPartition) -> Result<()> {
    use std::collections::HashMap;
    let mut source: HashMap<u32, u32> = HashMap::new();
    for (op, set) in &part.approx_vertices {
        for &v in set {
            source.insert(v, *op);
        }
    }
    let mut out = String::from("local_id,global_id,source_partition,is_core\n");
    for local in 0..part.num_local() as u32 {
        let global = part.map.to_global(local);
        let is_core = part.is_core_local(local);
        let src = if is_core {
            part.partition_id
        } else {
            *source.get(&global).expect("approx vertex has a source")
        };
        out.push_str(&format!("{local},{global},{src},{}\n", is_core as u8));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Worker directory for one extended partition: the dataset-directory
/// formats over the local vertex set, plus the provenance file.
pub fn write_extended_partition_dir(
    dir: &Path,
    part: &crate::approx::ExtendedPartition,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_edge_list(&dir.join("graph.edges"), &part.local_graph)?;
    write_features_bin(&dir.join("features.bin"), &part.local_features)?;
    write_labels_csv(&dir.join("labels.csv"), &part.local_labels)?;
    write_split_csv(&dir.join("split.csv"), &part.local_split)?;
    write_provenance_csv(&dir.join("provenance.csv"), part)?;
    let meta = serde_json::json!({
        "partition_id": part.partition_id,
        "core_vertices": part.core_count(),
        "approx_vertices": part.approx_count(),
        "local_vertices": part.num_local(),
        "local_edges": part.local_graph.num_edges(),
        "approx_per_source": part
            .approx_vertices
            .iter()
            .map(|(op, set)| (op.to_string(), set.len()))
            .collect::<std::collections::BTreeMap<_, _>>(),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

// ------------------------------------------------------------- helpers

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: String,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8], what: String) -> Self {
        Self {
            bytes,
            pos: 0,
            what,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated", self.what)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_sbm;
    use crate::model::{init_params, ModelConfig};

    #[test]
    fn edge_list_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (3, 1)], 4).unwrap();
        write_edge_list(&path, &g).unwrap();
        let h = read_edge_list(&path, 4).unwrap();
        assert_eq!(g, h);

        std::fs::write(&path, "# comment\n0 1  # trailing comment\n\n2 3\n").unwrap();
        let g = read_edge_list(&path, 4).unwrap();
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn malformed_edge_lines_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        for bad in ["0\n", "0 x\n", "0 1 2\n"] {
            std::fs::write(&path, bad).unwrap();
            assert!(read_edge_list(&path, 4).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn features_bin_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = DenseMatrix::from_vec(3, 2, vec![1.5, -0.25, 3.75e-8, 0.0, -1e20, 42.0]).unwrap();
        write_features_bin(&path, &f).unwrap();
        let g = read_features_bin(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn features_bin_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_features_bin(&path, &f).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_features_bin(&path).is_err());

        write_features_bin(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(read_features_bin(&path).is_err());
    }

    #[test]
    fn dataset_dir_round_trip() {
        let cfg = SbmConfig {
            n: 60,
            k: 3,
            p_in: 0.2,
            p_out: 0.02,
            seed: 5,
            ..SbmConfig::default()
        };
        let d = generate_sbm(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &d, Some(&cfg)).unwrap();
        let e = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(d, e);
        let meta = read_dataset_meta(dir.path()).unwrap();
        assert_eq!(meta.num_vertices, 60);
        assert_eq!(meta.generator.as_ref().unwrap().seed, 5);
    }

    #[test]
    fn features_csv_fallback() {
        let cfg = SbmConfig {
            n: 20,
            k: 2,
            p_in: 0.3,
            p_out: 0.05,
            seed: 8,
            ..SbmConfig::default()
        };
        let d = generate_sbm(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset_dir(dir.path(), &d, None).unwrap();
        // replace the binary with a CSV
        write_features_csv(&dir.path().join("features.csv"), &d.features).unwrap();
        std::fs::remove_file(dir.path().join("features.bin")).unwrap();
        let e = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let params: ModelParams<f32> = init_params(&ModelConfig::kw_gcn(), 7, 4, 99).unwrap();
        let bytes = params_to_bytes(&params);
        let back = params_from_bytes(&bytes).unwrap();
        assert_eq!(params, back);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.gfpm");
        save_checkpoint(&path, &params).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), params);
    }

    #[test]
    fn empty_params_is_header_only() {
        let params = ModelParams::<f32> { layers: vec![] };
        let bytes = params_to_bytes(&params);
        assert_eq!(bytes.len(), 12); // magic + version + count
        assert_eq!(params_from_bytes(&bytes).unwrap().layers.len(), 0);
    }

    #[test]
    fn params_dim_mismatch_rejected() {
        let params: ModelParams<f32> = init_params(&ModelConfig::kw_gcn(), 3, 2, 1).unwrap();
        let mut bytes = params_to_bytes(&params);
        // enlarge a declared dimension without adding data
        bytes[16] = 200;
        assert!(params_from_bytes(&bytes).is_err());
    }
}
