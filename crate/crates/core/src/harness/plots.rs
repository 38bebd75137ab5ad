use std::fs;
use std::path::{Path, PathBuf};

use super::{Manifest, OutputKind};
use crate::error::{Error, Result};

const PRELUDE: &str = "import csv\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n\
def load(path):\n    with open(path) as f:\n        rows = list(csv.DictReader(f))\n    return {k: [float(r[k]) for r in rows] for k in rows[0]}\n\n";

fn energy_script(csv: &Path, label: &str, png: &str) -> String {
    format!(
        "{PRELUDE}d = load({csv:?})\n\
plt.semilogy(d[\"t\"], d[\"energy\"], label=\"E\")\n\
plt.semilogy(d[\"t\"], d[\"f1\"], \"--\", label=\"F1\")\n\
plt.xlabel(\"t\")\nplt.title({label:?})\nplt.legend()\nplt.savefig({png:?})\n"
    )
}

fn convergence_script(csv: &Path, png: &str) -> String {
    format!(
        "{PRELUDE}d = load({csv:?})\n\
x = [max(s, t, e) for s, t, e in zip(d[\"sigma\"], d[\"tau\"], d[\"epsilon\"])]\n\
plt.loglog(x, d[\"sup_d\"], \"o\", label=\"sup D\")\n\
plt.loglog(x, d[\"upsilon_t0\"], \"s\", label=\"Upsilon(t0)\")\n\
plt.xlabel(\"largest parameter\")\nplt.legend()\nplt.savefig({png:?})\n"
    )
}

fn scan_script(csv: &Path, png: &str) -> String {
    format!(
        "{PRELUDE}d = load({csv:?})\n\
plt.loglog(d[\"gamma\"], d[\"norm_z\"], \"o-\", label=\"|z|\")\n\
plt.loglog(d[\"gamma\"], d[\"ratio\"], \"s-\", label=\"|z~|/|z|\")\n\
plt.xlabel(\"gamma\")\nplt.legend()\nplt.savefig({png:?})\n"
    )
}

/// Writes matplotlib scripts for the tabular outputs listed in `manifest`
/// and returns their paths. Nothing is written for an empty manifest.
pub fn emit_plots(manifest: &Manifest, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut scripts = Vec::new();
    for (i, o) in manifest.outputs.iter().enumerate() {
        let stem = format!("plot_{i}");
        let png = format!("{stem}.png");
        let body = match o.kind {
            OutputKind::EnergySeries => energy_script(&o.path, &o.label, &png),
            OutputKind::SweepTable => convergence_script(&o.path, &png),
            OutputKind::ScanTable => scan_script(&o.path, &png),
            _ => continue,
        };
        let path = dir.join(format!("{stem}.py"));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        scripts.push(path);
    }
    Ok(scripts)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::harness::OutputRecord;

    fn manifest(outputs: Vec<OutputRecord>) -> Manifest {
        Manifest {
            command: "decay".into(),
            preset: None,
            config_hash: String::new(),
            version: String::new(),
            seed: 0,
            threads: 1,
            wall_time: 0.0,
            ok: true,
            steps: Vec::new(),
            outputs,
            metrics: BTreeMap::new(),
            summary: Vec::new(),
        }
    }

    #[test]
    fn one_script_per_series() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(&manifest(Vec::new()), dir.path()).unwrap().is_empty());
        let rec = |p: &str, kind| OutputRecord {
            path: p.into(),
            kind,
            label: p.into(),
        };
        let m = manifest(vec![
            rec("energy_0.csv", OutputKind::EnergySeries),
            rec("energy_1.csv", OutputKind::EnergySeries),
            rec("decay.csv", OutputKind::DecayTable),
        ]);
        let scripts = emit_plots(&m, dir.path()).unwrap();
        assert_eq!(scripts.len(), 2);
        let text = fs::read_to_string(&scripts[1]).unwrap();
        assert!(text.contains("energy_1.csv"));
    }
}
