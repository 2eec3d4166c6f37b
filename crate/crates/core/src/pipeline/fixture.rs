//! Seeded synthetic inputs with known statistical structure.
//!
//! Each fixture is a directory holding `index.csv`, `fx.csv`, `cpi.csv`
//! (levels), a `manifest.toml` and a runnable `config.toml`. Prices span
//! `n` months; the crisis falls at month `n / 4`, so the post-crisis window
//! holds `n - n / 4` returns.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::output::write_atomic;
use super::PipelineError;
use crate::bootstrap::derive_seed;
use crate::copula::CopulaFamily;
use crate::dataio::{save_series, MacroSeries, SourceKind};
use crate::month::Month;
use crate::stats::mean;

pub const MIN_FIXTURE_MONTHS: usize = 24;

/// Clayton parameter of the `clayton_coupled` regime.
pub const CLAYTON_THETA: f64 = 2.0;
/// Clayton parameter of the `turkey_like` regime, `lambda_L = 0.34`.
pub const TURKEY_THETA: f64 = 0.644;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FixtureKind {
    /// Nominal return equals inflation plus a constant.
    PerfectHedge,
    /// Net return deviations are twice the loss deviations.
    AntiHedge,
    /// Returns and erosion coupled by a Clayton copula.
    ClaytonCoupled,
    /// Returns independent of erosion.
    Independent,
    /// Post-crisis means of 4.12% foreign erosion, 2.05% inflation and 3.74%
    /// nominal return, with a fused official/proxy CPI.
    TurkeyLike,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::PerfectHedge,
        FixtureKind::AntiHedge,
        FixtureKind::ClaytonCoupled,
        FixtureKind::Independent,
        FixtureKind::TurkeyLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::PerfectHedge => "perfect_hedge",
            FixtureKind::AntiHedge => "anti_hedge",
            FixtureKind::ClaytonCoupled => "clayton_coupled",
            FixtureKind::Independent => "independent",
            FixtureKind::TurkeyLike => "turkey_like",
        }
    }

    fn country(self) -> &'static str {
        match self {
            FixtureKind::TurkeyLike => "Turkey",
            _ => "Synthetia",
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown fixture kind `{s}` (expected one of {})", Self::ALL.map(|k| k.name()).join(", ")))
    }
}

/// Per-return-month draws before conversion to levels.
struct Paths {
    inflation: Vec<f64>,
    fx_change: Vec<f64>,
    nominal: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn centered(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    xs.iter().map(|x| x - m).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn simulate(kind: FixtureKind, n: usize, crisis: usize, rng: &mut ChaCha8Rng) -> Paths {
    let t = n - 1;
    let post = |i: usize| i + 1 >= crisis;
    match kind {
        FixtureKind::PerfectHedge | FixtureKind::AntiHedge => {
            let zs: Vec<f64> = (0..t).map(|_| normal(rng)).collect();
            let inflation: Vec<f64> = (0..t).map(|i| if post(i) { 0.03 } else { 0.01 } + 0.008 * zs[i]).collect();
            let nominal = match kind {
                FixtureKind::PerfectHedge => inflation.iter().map(|p| p + 0.005).collect(),
                _ => (0..t).map(|i| 0.02 + 3.0 * 0.008 * zs[i]).collect(),
            };
            Paths {
                inflation,
                fx_change: vec![0.0; t],
                nominal,
            }
        }
        FixtureKind::ClaytonCoupled | FixtureKind::Independent => {
            let (u, v) = if kind == FixtureKind::ClaytonCoupled {
                CopulaFamily::Clayton.sample(CLAYTON_THETA, t, rng)
            } else {
                let u: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
                let v: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
                (u, v)
            };
            Paths {
                inflation: (0..t).map(|i| if post(i) { 0.03 } else { 0.01 } + 0.004 * logit(v[i])).collect(),
                fx_change: v.iter().map(|&v| 0.01 + 0.004 * logit(v)).collect(),
                nominal: u.iter().map(|&u| 0.015 + 0.01 * logit(u)).collect(),
            }
        }
        FixtureKind::TurkeyLike => {
            let pre = crisis - 1;
            let (u, v) = CopulaFamily::Clayton.sample(TURKEY_THETA, t - pre, rng);
            let gv = centered(&v.iter().map(|&v| logit(v)).collect::<Vec<_>>());
            let gu = centered(&u.iter().map(|&u| logit(u)).collect::<Vec<_>>());
            let mut inflation: Vec<f64> = (0..pre).map(|_| 0.008 + 0.002 * normal(rng)).collect();
            let mut fx_change: Vec<f64> = (0..pre).map(|_| 0.005 + 0.01 * normal(rng)).collect();
            let mut nominal: Vec<f64> = (0..pre).map(|_| 0.01 + 0.04 * normal(rng)).collect();
            inflation.extend(gv.iter().map(|g| 0.0205 + 0.006 * g));
            fx_change.extend(gv.iter().map(|g| 0.0207 + 0.012 * g));
            nominal.extend(gu.iter().map(|g| 0.0374 + 0.05 * g));
            Paths {
                inflation,
                fx_change,
                nominal,
            }
        }
    }
}

fn levels(start: f64, changes: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(changes.len() + 1);
    out.push(start);
    for c in changes {
        let last = *out.last().expect("non-empty");
        out.push(last * (1.0 + c));
    }
    out
}

#[derive(Debug, Clone)]
pub struct FixtureFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Writes a fixture of `n` monthly prices. Identical arguments give
/// byte-identical files.
pub fn generate_fixture(kind: FixtureKind, n: usize, seed: u64, out: &Path) -> Result<FixtureFiles, PipelineError> {
    if n < MIN_FIXTURE_MONTHS {
        return Err(PipelineError::Config(format!("fixture needs n >= {MIN_FIXTURE_MONTHS} months, got {n}")));
    }
    let crisis = n / 4;
    let start = match kind {
        FixtureKind::TurkeyLike => Month::new(2018, 8).expect("valid").offset(-(crisis as i64)),
        _ => Month::new(2010, 1).expect("valid"),
    };
    let crisis_month = start.offset(crisis as i64);
    let crisis_date = match kind {
        FixtureKind::TurkeyLike => "2018-08-13".to_string(),
        _ => format!("{crisis_month}-15"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, kind as u64));
    let paths = simulate(kind, n, crisis, &mut rng);

    let io = |e: crate::dataio::DataError| PipelineError::Data {
        stage: "fixture",
        message: e.to_string(),
    };
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let mut save = |name: &str, values: &[f64], from: usize| -> Result<(), PipelineError> {
        let s = MacroSeries::from_values(name, SourceKind::Official, start.offset(from as i64), values);
        let path = out.join(format!("{name}.csv"));
        save_series(&s, &path).map_err(io)?;
        files.push(path);
        Ok(())
    };
    let cpi = levels(100.0, &paths.inflation);
    save("index", &levels(1000.0, &paths.nominal), 0)?;
    save("fx", &levels(5.0, &paths.fx_change), 0)?;
    let mut manifest = String::from(
        "[[series]]\nname = \"index\"\npath = \"index.csv\"\nunit = \"points\"\n\n\
         [[series]]\nname = \"fx\"\npath = \"fx.csv\"\nunit = \"local per USD\"\n\n",
    );
    if kind == FixtureKind::TurkeyLike {
        // official CPI published with a three-month lag; the proxy covers it
        save("cpi_official", &cpi[..n - 3], 0)?;
        save("cpi_proxy", &cpi, 0)?;
        manifest.push_str(
            "[[series]]\nname = \"cpi_official\"\npath = \"cpi_official.csv\"\nunit = \"fraction\"\ntransform = \"pct_change\"\n\
             reliability = { timeliness = 0.5, revision_volatility = 0.2, crosscheck_error = 0.1 }\n\n\
             [[series]]\nname = \"cpi_proxy\"\npath = \"cpi_proxy.csv\"\nunit = \"fraction\"\nsource_kind = \"proxy\"\ntransform = \"pct_change\"\n\n\
             [[hybrid]]\nname = \"inflation\"\nactual = \"cpi_official\"\nproxy = \"cpi_proxy\"\n",
        );
    } else {
        save("cpi", &cpi, 0)?;
        manifest.push_str("[[series]]\nname = \"inflation\"\npath = \"cpi.csv\"\nunit = \"fraction\"\ntransform = \"pct_change\"\n");
    }
    let manifest_path = out.join("manifest.toml");
    write_atomic(&manifest_path, &manifest)?;
    files.push(manifest_path);

    let config = format!(
        "# {kind} fixture: n = {n}, seed = {seed}\n\
         version = 1\n\
         seed = {seed}\n\n\
         [bootstrap]\n\
         replications = 1000\n\n\
         [[episode]]\n\
         country = \"{country}\"\n\
         crisis_date = \"{crisis_date}\"\n\
         window_start = \"{ws}\"\n\
         window_end = \"{we}\"\n\
         residency = [\"local\", \"foreign\"]\n\
         series_manifest = \"manifest.toml\"\n\n\
         [episode.features]\n\
         base = [\"inflation\", \"fx_change\"]\n\
         lags = {{ inflation = [1] }}\n\
         dummies = [{{ name = \"crisis_event\" }}]\n\
         interactions = [[\"inflation\", \"fx_change\"]]\n",
        country = kind.country(),
        ws = start.next(),
        we = start.offset(n as i64 - 1),
    );
    let config_path = out.join("config.toml");
    write_atomic(&config_path, &config)?;
    files.push(config_path.clone());
    Ok(FixtureFiles {
        dir: out.to_path_buf(),
        config: config_path,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_short_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = generate_fixture(FixtureKind::Independent, 23, 1, dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn deterministic_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for kind in FixtureKind::ALL {
            let fa = generate_fixture(kind, 48, 9, &a.path().join(kind.name())).unwrap();
            let fb = generate_fixture(kind, 48, 9, &b.path().join(kind.name())).unwrap();
            assert_eq!(fa.files.len(), fb.files.len());
            for (x, y) in fa.files.iter().zip(&fb.files) {
                assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
            }
        }
        let c = tempfile::tempdir().unwrap();
        let fc = generate_fixture(FixtureKind::Independent, 48, 10, c.path()).unwrap();
        assert_ne!(
            std::fs::read(&fc.files[0]).unwrap(),
            std::fs::read(a.path().join("independent/index.csv")).unwrap()
        );
    }

    #[test]
    fn kind_names_round_trip() {
        for k in FixtureKind::ALL {
            assert_eq!(k.name().parse::<FixtureKind>().unwrap(), k);
        }
        assert_eq!("clayton-coupled".parse::<FixtureKind>().unwrap(), FixtureKind::ClaytonCoupled);
        assert!("gaussian".parse::<FixtureKind>().is_err());
    }
}
