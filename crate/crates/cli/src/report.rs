use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use shopseg::pipeline::{ASSIGNMENTS_FILE, CENTERS_FILE, SHARES_FILE};
use shopseg::validity;

use crate::manifest::RunManifest;
use crate::{assignment_name, load_assignment};

struct CenterTable {
    labels: Vec<String>,
    features: Vec<String>,
    values: Vec<Vec<f64>>,
}

fn read_centers(path: &Path) -> Result<CenterTable> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "cluster" || &header[1] != "label" {
        bail!("{} is not a centers table", path.display());
    }
    let features = header.iter().skip(2).map(str::to_string).collect();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        labels.push(record[1].to_string());
        values.push(
            record
                .iter()
                .skip(2)
                .map(|v| {
                    v.parse::<f64>()
                        .with_context(|| format!("bad number `{v}` in {}", path.display()))
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(CenterTable {
        labels,
        features,
        values,
    })
}

/// Cluster labels from a shares table, after checking the shares sum to 1.
fn read_shares(path: &Path) -> Result<BTreeMap<usize, String>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut labels = BTreeMap::new();
    let mut total = 0.0;
    for record in rdr.records() {
        let record = record?;
        labels.insert(record[0].parse()?, record[1].to_string());
        total += record[3].parse::<f64>()?;
    }
    if (total - 1.0).abs() > 1e-9 {
        bail!("shares in {} sum to {total}", path.display());
    }
    Ok(labels)
}

/// Report directories inside a run: the run itself and its immediate
/// subdirectories that hold a centers table.
fn report_dirs(run: &Path) -> Result<Vec<(String, PathBuf)>> {
    let base = run
        .file_name()
        .map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
    let mut found = Vec::new();
    if run.join(CENTERS_FILE).is_file() {
        found.push((base.clone(), run.to_path_buf()));
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(run)
        .with_context(|| format!("reading {}", run.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CENTERS_FILE).is_file())
        .collect();
    subdirs.sort();
    for dir in subdirs {
        let name = format!("{base}_{}", dir.file_name().unwrap().to_string_lossy());
        found.push((name, dir));
    }
    if found.is_empty() {
        bail!("no segmentation reports found under {}", run.display());
    }
    Ok(found)
}

pub fn cmd_report(runs: &[PathBuf], compare_to: &[String], out: &Path, config: serde_json::Value) -> Result<()> {
    let mut manifest = RunManifest::start("report", config, None);
    std::fs::create_dir_all(out)?;
    let others = compare_to
        .iter()
        .map(|s| Ok((assignment_name(s), load_assignment(s)?)))
        .collect::<Result<Vec<_>>>()?;

    for run in runs {
        for (name, dir) in report_dirs(run)? {
            let centers_path = dir.join(CENTERS_FILE);
            manifest.add_input(&centers_path)?;
            let centers = read_centers(&centers_path)?;
            std::fs::copy(&centers_path, out.join(format!("{name}_centers.csv")))?;
            let payload = serde_json::json!({
                "row_labels": centers.labels,
                "column_labels": centers.features,
                "values": centers.values,
            });
            std::fs::write(
                out.join(format!("{name}_centers_heatmap.json")),
                serde_json::to_string_pretty(&payload)? + "\n",
            )?;

            let shares_path = dir.join(SHARES_FILE);
            let labels = read_shares(&shares_path)?;
            manifest.add_input(&shares_path)?;
            if others.is_empty() {
                continue;
            }
            let assignment_path = dir.join(ASSIGNMENTS_FILE);
            let mine = load_assignment(&assignment_path.to_string_lossy())?;
            for (other_name, other) in &others {
                match validity::crosstab(&mine, other) {
                    Ok(mut ct) => {
                        ct.relabel(&labels, &BTreeMap::new());
                        let stem = format!("{name}_vs_{other_name}_crosstab");
                        let mut wtr = std::io::BufWriter::new(std::fs::File::create(out.join(format!("{stem}.csv")))?);
                        ct.write_csv(&mut wtr)?;
                        std::fs::write(out.join(format!("{stem}.json")), ct.to_heatmap_json()? + "\n")?;
                    }
                    Err(shopseg::Error::MismatchedEntities { .. }) => {
                        log::warn!("skipping crosstab {name} vs {other_name}: different entity sets");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    manifest.finish(out)
}
