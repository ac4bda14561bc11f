//! Flat `key = value` configuration files with `include = path` lines, checked
//! against a per-command schema.
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use zollab_core::capacities::Exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
    /// Comma-separated exact values such as `1,2` or `1.02pi,0.98pi`.
    ExactList,
    /// `start:stop:count`.
    Range,
    Path,
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, kind, default, help }
}

/// Keys accepted by every command.
pub const COMMON: &[Key] = &[
    key("out", Kind::Path, None, "output directory (default: $ZOLLAB_OUT, then ./zollab-out)"),
    key("seed", Kind::Int, Some("7"), "random seed"),
    key("tol", Kind::Float, Some("1e-12"), "integrator tolerance"),
];

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
}

pub const COMMANDS: &[Command] = &[
    Command {
        name: "capacities",
        about: "EHGH and ECH capacity tables in exact arithmetic",
        keys: &[
            key("ellipsoid", Kind::ExactList, None, "ellipsoid parameters a_1,...,a_n"),
            key("polydisk", Kind::ExactList, None, "polydisk parameters a,b"),
            key("k_max", Kind::Int, Some("6"), "largest index k"),
            key("kind", Kind::Text, Some("ehgh"), "ehgh or ech"),
        ],
    },
    Command {
        name: "volume",
        about: "volumes of ellipsoids, polydisks and lifted domains",
        keys: &[
            key("ellipsoid", Kind::ExactList, None, "ellipsoid parameters"),
            key("polydisk", Kind::ExactList, None, "polydisk parameters a,b"),
            key("bumps", Kind::Int, None, "lift a random Hamiltonian with this many bumps"),
            key("grid", Kind::Int, Some("40"), "sphere grid resolution n (n x 1.2n x 1.2n)"),
        ],
    },
    Command {
        name: "reeb",
        about: "Reeb flow, systole and systolic ratio of an ellipsoid form",
        keys: &[key("ellipsoid", Kind::ExactList, Some("1.02pi,0.98pi"), "parameters a,b of epsilon_{a,b}")],
    },
    Command {
        name: "lift",
        about: "lifted domain of a radial bump: volume and characteristic action",
        keys: &[
            key("height", Kind::Float, Some("0.2"), "bump height f(0)"),
            key("rho_support", Kind::Float, Some("0.5"), "support of the profile in |w|^2"),
            key("grid", Kind::Int, Some("32"), "sphere grid resolution"),
        ],
    },
    Command {
        name: "genfun",
        about: "generating functions: rotation residual, Hamilton-Jacobi, flattening",
        keys: &[
            key("theta", Kind::Float, Some("0.1"), "rotation angle"),
            key("grid", Kind::Int, Some("36"), "side of the square grid clipped to the disk"),
            key("radius", Kind::Float, Some("0.8"), "disk radius"),
            key("flatten_eps", Kind::Float, Some("0.05"), "smallness parameter of the flattening"),
        ],
    },
    Command {
        name: "counterexample",
        about: "the rescaled family H^lambda: systole, volume and strictness per lambda",
        keys: &[
            key("lambda_grid", Kind::Range, Some("0.05:0.25:5"), "start:stop:count"),
            key("rho_supp", Kind::Float, Some("0.3"), "support of F in |w|^2"),
            key("u_radius", Kind::Float, Some("0.2"), "radius of the displaced disk U"),
            key("census_grid", Kind::Int, Some("120"), "seed grid of the periodic-point census"),
            key("k_max", Kind::Int, Some("8"), "largest period in the census"),
        ],
    },
    Command {
        name: "spectral",
        about: "closed-form spectral invariants c_0, c_1 of ellipsoid forms",
        keys: &[key("ellipsoid", Kind::ExactList, Some("1.02pi,0.98pi"), "parameters a,b")],
    },
    Command {
        name: "bm",
        about: "Banach-Mazur distance to the round form and its conformal geodesic",
        keys: &[
            key("ellipsoid", Kind::ExactList, Some("1.02pi,0.98pi"), "parameters a,b"),
            key("steps", Kind::Int, Some("4"), "geodesic partition steps"),
        ],
    },
    Command {
        name: "anosov-katok",
        about: "conjugation scheme with density certificate",
        keys: &[
            key("stages", Kind::Int, Some("3"), "number of stages"),
            key("eps", Kind::Float, Some("0.2"), "density target"),
            key("centers", Kind::Int, Some("500"), "size of the center lattice"),
            key("checkpoint", Kind::Path, None, "resume from this state file"),
        ],
    },
    Command { name: "selftest", about: "runs the full acceptance suite", keys: &[] },
];

pub fn command(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

fn lookup(cmd: &Command, name: &str) -> Option<Key> {
    cmd.keys.iter().chain(COMMON).find(|k| k.name == name).copied()
}

/// Validated settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: &'static str,
    values: BTreeMap<String, String>,
}

/// Reads `path` into raw pairs, following `include` lines relative to the
/// including file.
pub fn read_file(path: &Path) -> Result<Vec<(String, String)>> {
    let mut seen = Vec::new();
    read_rec(path, &mut seen)
}

fn read_rec(path: &Path, seen: &mut Vec<PathBuf>) -> Result<Vec<(String, String)>> {
    let canon = fs::canonicalize(path).with_context(|| format!("cannot open config {}", path.display()))?;
    if seen.contains(&canon) {
        bail!("include cycle through {}", path.display());
    }
    seen.push(canon.clone());
    let text = fs::read_to_string(&canon)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), n + 1))?;
        let (k, v) = (k.trim().replace('-', "_"), v.trim().to_string());
        if k == "include" {
            let base = canon.parent().unwrap_or(Path::new("."));
            out.extend(read_rec(&base.join(&v), seen)?);
        } else {
            out.push((k, v));
        }
    }
    seen.pop();
    Ok(out)
}

impl Settings {
    /// Later pairs override earlier ones; every key must belong to the schema
    /// of `command` and parse as its declared kind.
    pub fn new(command_name: &str, pairs: &[(String, String)]) -> Result<Settings> {
        let cmd = command(command_name).ok_or_else(|| anyhow!("unknown command '{command_name}'"))?;
        let mut values = BTreeMap::new();
        for (k, v) in pairs {
            if k == "command" {
                if v != cmd.name {
                    bail!("key 'command': config is for '{v}', not '{}'", cmd.name);
                }
                continue;
            }
            let spec = lookup(cmd, k).ok_or_else(|| anyhow!("key '{k}': not a setting of '{}'", cmd.name))?;
            check(&spec, v)?;
            values.insert(k.clone(), v.clone());
        }
        for spec in cmd.keys.iter().chain(COMMON) {
            if let Some(d) = spec.default {
                values.entry(spec.name.to_string()).or_insert_with(|| d.to_string());
            }
        }
        Ok(Settings { command: cmd.name, values })
    }

    pub fn raw(&self, k: &str) -> Option<&str> {
        self.values.get(k).map(String::as_str)
    }

    /// All settings, for echoing into the manifest.
    pub fn pairs(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn int(&self, k: &str) -> Result<Option<i64>> {
        self.raw(k).map(|v| v.parse::<i64>().map_err(|e| anyhow!("key '{k}': {e}"))).transpose()
    }

    pub fn int_or(&self, k: &str, d: i64) -> Result<i64> {
        Ok(self.int(k)?.unwrap_or(d))
    }

    pub fn float(&self, k: &str) -> Result<f64> {
        let v = self.raw(k).ok_or_else(|| anyhow!("key '{k}' is required"))?;
        v.parse::<f64>().map_err(|e| anyhow!("key '{k}': {e}"))
    }

    pub fn exacts(&self, k: &str) -> Result<Option<Vec<Exact>>> {
        self.raw(k).map(|v| parse_exacts(v).map_err(|e| anyhow!("key '{k}': {e}"))).transpose()
    }

    pub fn range(&self, k: &str) -> Result<Vec<f64>> {
        let v = self.raw(k).ok_or_else(|| anyhow!("key '{k}' is required"))?;
        parse_range(v).map_err(|e| anyhow!("key '{k}': {e}"))
    }
}

fn check(spec: &Key, v: &str) -> Result<()> {
    let k = spec.name;
    match spec.kind {
        Kind::Int => {
            let n: i64 = v.parse().map_err(|e| anyhow!("key '{k}': {e}"))?;
            if n <= 0 && k != "seed" {
                bail!("key '{k}': must be positive, got {n}");
            }
        }
        Kind::Float => {
            let x: f64 = v.parse().map_err(|e| anyhow!("key '{k}': {e}"))?;
            if !(x > 0.0 && x.is_finite()) {
                bail!("key '{k}': must be positive and finite, got {v}");
            }
        }
        Kind::ExactList => {
            parse_exacts(v).map_err(|e| anyhow!("key '{k}': {e}"))?;
        }
        Kind::Range => {
            parse_range(v).map_err(|e| anyhow!("key '{k}': {e}"))?;
        }
        Kind::Text | Kind::Path => {
            if v.is_empty() {
                bail!("key '{k}': empty value");
            }
        }
    }
    Ok(())
}

pub fn parse_exacts(v: &str) -> Result<Vec<Exact>> {
    let out = v.split(',').map(|s| Exact::from_str(s.trim()).map_err(|e| anyhow!("{e}"))).collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        bail!("empty list");
    }
    Ok(out)
}

/// `start:stop:count`, endpoints included.
pub fn parse_range(v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').collect();
    let [a, b, n] = parts[..] else { bail!("expected start:stop:count, got '{v}'") };
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    let n: usize = n.trim().parse()?;
    if n == 0 || !(a.is_finite() && b.is_finite()) || (n == 1 && a != b) {
        bail!("bad range '{v}'");
    }
    Ok((0..n).map(|i| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let s = Settings::new("capacities", &pairs(&[("ellipsoid", "1,2"), ("k_max", "6"), ("k_max", "9")])).unwrap();
        assert_eq!(s.int("k_max").unwrap(), Some(9));
        assert_eq!(s.raw("kind"), Some("ehgh"));
        assert_eq!(s.exacts("ellipsoid").unwrap().unwrap().len(), 2);
    }

    #[test]
    fn offending_key_is_named() {
        let e = Settings::new("capacities", &pairs(&[("k_max", "-1")])).unwrap_err().to_string();
        assert!(e.contains("'k_max'"), "{e}");
        let e = Settings::new("capacities", &pairs(&[("lamda", "1")])).unwrap_err().to_string();
        assert!(e.contains("'lamda'"), "{e}");
        let e = Settings::new("counterexample", &pairs(&[("lambda_grid", "0.1:0.2")])).unwrap_err().to_string();
        assert!(e.contains("'lambda_grid'"), "{e}");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0.05:0.25:5").unwrap(), vec![0.05, 0.1, 0.15000000000000002, 0.2, 0.25]);
        assert_eq!(parse_range("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_range("1:2:0").is_err());
    }

    #[test]
    fn includes_resolve_relative_and_detect_cycles() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("base.cfg"), "k_max = 4 # shared\nkind = ech\n").unwrap();
        fs::write(dir.path().join("run.cfg"), "include = base.cfg\ncommand = capacities\nk-max = 5\n").unwrap();
        let p = read_file(&dir.path().join("run.cfg")).unwrap();
        let s = Settings::new("capacities", &p).unwrap();
        assert_eq!(s.int("k_max").unwrap(), Some(5));
        assert_eq!(s.raw("kind"), Some("ech"));
        fs::write(dir.path().join("a.cfg"), "include = b.cfg\n").unwrap();
        fs::write(dir.path().join("b.cfg"), "include = a.cfg\n").unwrap();
        assert!(read_file(&dir.path().join("a.cfg")).unwrap_err().to_string().contains("cycle"));
    }
}
