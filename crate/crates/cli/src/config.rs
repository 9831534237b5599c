//! TOML run configuration.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;
use ultranet::binary::FoldingScenario;
use ultranet::kernels::arrhenius_kernel;
use ultranet::oracle::Orientation;
use ultranet::padic::CellAddress;
use ultranet::spectral::TauOptions;
use ultranet::{Basin, CellFunction, Convention, NetworkSpec, Prime, RadialKernel};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    pub prime: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    /// Wavelet truncation `R`; cells live at depth `R + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_orientation: Option<Orientation>,
    #[serde(rename = "basin")]
    pub basins: Vec<Spanned<BasinConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Spanned<RatesConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<Spanned<DatumConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Spanned<TimeConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folding: Option<Spanned<FoldingConfig>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinConfig {
    pub name: String,
    pub digit: u8,
    pub w: KernelConfig,
    /// Defaults to `w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<KernelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelConfig {
    Levels(Vec<f64>),
    Arrhenius(ArrheniusConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrheniusConfig {
    pub barriers: Vec<f64>,
    pub kt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumConfig {
    /// `uniform[:c]`, `delta:<basin>:<digits>` or `ivp2:r=<r>,c=<amplitude>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// One row per basin, `p^R` cell values each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Also dump the assembled generator as `generator.csv`.
    #[serde(default)]
    pub dump_generator: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FoldingConfig {
    #[serde(default = "default_unfolded")]
    pub unfolded: String,
    #[serde(default = "default_native")]
    pub native: String,
    pub r: i32,
    pub amplitude: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_folding_convention")]
    pub convention: Convention,
    #[serde(default = "default_min_a")]
    pub min_a: f64,
}

fn default_threshold() -> f64 {
    0.99
}

fn default_paths() -> usize {
    100_000
}

fn default_unfolded() -> String {
    "U".into()
}

fn default_native() -> String {
    "N".into()
}

fn default_folding_convention() -> Convention {
    Convention::Paper
}

fn default_min_a() -> f64 {
    10.0
}

/// Digits of a cell label: concatenated for `p <= 10`, `-`-separated above.
fn parse_digits(p: Prime, label: &str) -> Option<Vec<u8>> {
    if p.get() > 10 {
        label.split('-').map(|d| d.parse().ok()).collect()
    } else {
        label
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as u8))
            .collect()
    }
}

/// A parsed config together with its source, for line-numbered errors.
pub struct Loaded {
    pub config: Config,
    pub source: String,
    pub path: String,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

impl Loaded {
    pub fn parse(path: &str, source: String) -> Result<Self, CliError> {
        let config: Config = toml::from_str(&source).map_err(|e| {
            let at = e
                .span()
                .map(|s| format!(":{}", line_of(&source, s.start)))
                .unwrap_or_default();
            CliError::Config(format!("{path}{at}: {}", e.message()))
        })?;
        Ok(Loaded {
            config,
            source,
            path: path.to_string(),
        })
    }

    pub fn error_at(&self, span: Range<usize>, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!(
            "{}:{}: {msg}",
            self.path,
            line_of(&self.source, span.start)
        ))
    }

    fn error(&self, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{}: {msg}", self.path))
    }

    /// Attach the line of the config entry a core validation error talks
    /// about, when one can be identified.
    fn locate(&self, err: ultranet::Error) -> CliError {
        let msg = err.to_string();
        if !matches!(
            err,
            ultranet::Error::Validation(_) | ultranet::Error::Usage(_)
        ) {
            return CliError::Core(err);
        }
        let c = &self.config;
        if msg.contains("lambda[") || msg.contains("mu[") {
            if let Some(r) = &c.rates {
                return self.error_at(r.span(), msg);
            }
        }
        for b in &c.basins {
            if msg.contains(&format!("basin {}", b.get_ref().name)) {
                return self.error_at(b.span(), msg);
            }
        }
        if msg.contains("datum") {
            if let Some(d) = &c.datum {
                return self.error_at(d.span(), msg);
            }
        }
        CliError::Core(err)
    }

    pub fn prime(&self) -> Result<Prime, CliError> {
        Prime::new(self.config.prime).map_err(|e| self.error(e))
    }

    pub fn convention(&self) -> Convention {
        self.config.convention.unwrap_or_default()
    }

    pub fn orientation(&self) -> Orientation {
        self.config.kernel_orientation.unwrap_or_default()
    }

    fn kernel(
        &self,
        p: Prime,
        k: &KernelConfig,
        at: Range<usize>,
    ) -> Result<RadialKernel, CliError> {
        match k {
            KernelConfig::Levels(l) => RadialKernel::new(p, l.clone()),
            KernelConfig::Arrhenius(a) => arrhenius_kernel(p, &a.barriers, a.kt),
        }
        .map_err(|e| self.error_at(at, e))
    }

    /// The network with basins in config order.
    pub fn spec(&self) -> Result<NetworkSpec, CliError> {
        self.spec_ordered(None)
    }

    /// The network with basins listed in `order` (indices into the config).
    pub fn spec_ordered(&self, order: Option<&[usize]>) -> Result<NetworkSpec, CliError> {
        let p = self.prime()?;
        let c = &self.config;
        let n = c.basins.len();
        if n == 0 {
            return Err(self.error("at least one [[basin]] is required"));
        }
        let natural: Vec<usize> = (0..n).collect();
        let order = order.unwrap_or(&natural);
        let mut basins = Vec::with_capacity(n);
        for &i in order {
            let b = &c.basins[i];
            let cfg = b.get_ref();
            let w = self.kernel(p, &cfg.w, b.span())?;
            let v = match &cfg.v {
                Some(v) => self.kernel(p, v, b.span())?,
                None => w.clone(),
            };
            basins.push(Basin {
                digit: cfg.digit,
                name: cfg.name.clone(),
                w,
                v,
            });
        }
        let (lambda, mu) = match &c.rates {
            Some(r) => {
                let rc = r.get_ref();
                let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|row| row.len() == n);
                if !square(&rc.lambda) || !square(&rc.mu) {
                    return Err(self.error_at(
                        r.span(),
                        format!("rates.lambda and rates.mu must be {n}x{n}"),
                    ));
                }
                let pick = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    order
                        .iter()
                        .map(|&a| order.iter().map(|&b| m[a][b]).collect())
                        .collect()
                };
                (pick(&rc.lambda), pick(&rc.mu))
            }
            None if n == 1 => (vec![vec![0.0]], vec![vec![0.0]]),
            None => return Err(self.error("[rates] is required with more than one basin")),
        };
        NetworkSpec::new(p, basins, lambda, mu, self.convention()).map_err(|e| self.locate(e))
    }

    pub fn truncation(&self, spec: &NetworkSpec) -> u32 {
        self.config
            .truncation
            .unwrap_or(spec.kernel_depth() as u32 + 1)
    }

    pub fn datum(&self, spec: &NetworkSpec, big_r: u32) -> Result<CellFunction, CliError> {
        let d = self
            .config
            .datum
            .as_ref()
            .ok_or_else(|| self.error("[datum] is required for this subcommand"))?;
        let at = d.span();
        let p = spec.prime();
        let depth = big_r as usize + 1;
        let per = p.pow(big_r).map_err(CliError::Core)? as usize;
        let digits = spec.basin_digits();
        let n = digits.len();
        let built = match (&d.get_ref().preset, &d.get_ref().values) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(self.error_at(at, "datum needs exactly one of `preset` and `values`"))
            }
            (None, Some(rows)) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != per) {
                    return Err(self.error_at(
                        at,
                        format!("datum.values must be {n} rows of {per} cell values"),
                    ));
                }
                CellFunction::new(p, depth, digits, rows.clone())
            }
            (Some(preset), None) => {
                let (kind, arg) = preset.split_once(':').unwrap_or((preset.as_str(), ""));
                match kind {
                    "uniform" => {
                        let c = if arg.is_empty() {
                            1.0
                        } else {
                            arg.parse().map_err(|_| {
                                self.error_at(at.clone(), format!("bad uniform level {arg:?}"))
                            })?
                        };
                        CellFunction::constant(p, depth, digits, c)
                    }
                    "delta" => {
                        let (name, cell) = arg.split_once(':').ok_or_else(|| {
                            self.error_at(at.clone(), "delta preset is delta:<basin>:<digits>")
                        })?;
                        let k = spec.position_of(name).ok_or_else(|| {
                            self.error_at(at.clone(), format!("unknown basin {name:?}"))
                        })?;
                        let ds = parse_digits(p, cell).ok_or_else(|| {
                            self.error_at(at.clone(), format!("bad cell digits {cell:?}"))
                        })?;
                        if ds.len() != depth - 1 {
                            return Err(
                                self.error_at(at, format!("delta cell needs {} digits", depth - 1))
                            );
                        }
                        let addr = CellAddress::new(p, digits[k], ds)
                            .map_err(|e| self.error_at(at.clone(), e))?;
                        let mut rows = vec![vec![0.0; per]; n];
                        rows[k][addr.index(p)] = 1.0;
                        CellFunction::new(p, depth, digits, rows)
                    }
                    "ivp2" => return self.ivp2(spec, arg, big_r, at),
                    other => {
                        return Err(self.error_at(at, format!("unknown datum preset {other:?}")))
                    }
                }
            }
        };
        built.map_err(|e| self.error_at(at, e))
    }

    fn ivp2(
        &self,
        spec: &NetworkSpec,
        arg: &str,
        big_r: u32,
        at: Range<usize>,
    ) -> Result<CellFunction, CliError> {
        let mut r = None;
        let mut c = None;
        for kv in arg.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| self.error_at(at.clone(), format!("bad ivp2 parameter {kv:?}")))?;
            match k.trim() {
                "r" => r = v.trim().parse::<i32>().ok(),
                "c" => c = v.trim().parse::<f64>().ok(),
                _ => return Err(self.error_at(at, format!("unknown ivp2 parameter {k:?}"))),
            }
        }
        let (r, c) = match (r, c) {
            (Some(r), Some(c)) => (r, c),
            _ => return Err(self.error_at(at, "ivp2 preset is ivp2:r=<r>,c=<amplitude>")),
        };
        let sc = FoldingScenario {
            spec: spec.clone(),
            r,
            amplitude: c,
            threshold: 1.0,
        };
        let g = sc.validate().map_err(|e| self.error_at(at.clone(), e))?;
        ultranet::binary::ivp2_datum(spec, &g, r, c, big_r).map_err(|e| self.error_at(at, e))
    }

    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        let t = self
            .config
            .time
            .as_ref()
            .ok_or_else(|| self.error("[time] is required for this subcommand"))?;
        let tc = t.get_ref();
        let grid = match (&tc.grid, tc.start, tc.stop, tc.steps) {
            (Some(g), None, None, None) => g.clone(),
            (None, start, Some(stop), Some(steps)) if steps >= 1 => {
                let start = start.unwrap_or(0.0);
                (0..=steps)
                    .map(|k| start + (stop - start) * k as f64 / steps as f64)
                    .collect()
            }
            _ => {
                return Err(self.error_at(
                    t.span(),
                    "time needs either `grid` or `stop` and `steps` (with optional `start`)",
                ))
            }
        };
        if grid.is_empty()
            || grid.iter().any(|x| !(x.is_finite() && *x >= 0.0))
            || grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(self.error_at(
                t.span(),
                "time grid must be nonempty, sorted, finite and >= 0",
            ));
        }
        Ok(grid)
    }

    pub fn tau_options(&self) -> TauOptions {
        match &self.config.tau {
            Some(t) => TauOptions {
                threshold: t.threshold,
                horizon: t.horizon,
                dt: t.dt,
            },
            None => TauOptions::with_threshold(default_threshold()),
        }
    }

    pub fn simulate(&self) -> SimulateConfig {
        self.config.simulate.clone().unwrap_or(SimulateConfig {
            paths: default_paths(),
            seed: 0,
        })
    }

    pub fn folding(&self) -> Result<(&FoldingConfig, Range<usize>), CliError> {
        self.config
            .folding
            .as_ref()
            .map(|f| (f.get_ref(), f.span()))
            .ok_or_else(|| self.error("[folding] is required for folding-demo"))
    }

    /// The config with every default written out.
    pub fn normalized(&self) -> Result<Config, CliError> {
        let mut c = self.config.clone();
        let spec = self.spec()?;
        c.convention = Some(self.convention());
        c.truncation = Some(self.truncation(&spec));
        c.kernel_orientation = Some(self.orientation());
        for b in c.basins.iter_mut() {
            let span = b.span();
            let mut inner = b.get_ref().clone();
            if inner.v.is_none() {
                inner.v = Some(inner.w.clone());
            }
            *b = Spanned::new(span, inner);
        }
        if c.rates.is_none() {
            c.rates = Some(Spanned::new(
                0..0,
                RatesConfig {
                    lambda: vec![vec![0.0]],
                    mu: vec![vec![0.0]],
                },
            ));
        }
        if c.time.is_some() {
            let grid = self.times()?;
            c.time = Some(Spanned::new(
                0..0,
                TimeConfig {
                    grid: Some(grid),
                    start: None,
                    stop: None,
                    steps: None,
                },
            ));
        }
        Ok(c)
    }

    pub fn apply_convention(&mut self, conv: Convention) {
        self.config.convention = Some(conv);
        if let Some(f) = self.config.folding.as_mut() {
            let span = f.span();
            let mut inner = f.get_ref().clone();
            inner.convention = conv;
            *f = Spanned::new(span, inner);
        }
    }
}
