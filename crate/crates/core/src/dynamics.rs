//! Iterated-system simulation of map chains, the three distributional
//! interpretations of a chain, and the checkable sufficient condition for
//! the existence of a stationary solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{lipschitz_bound, sample_noise_map, NoiseSpec};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::transport::{QuantileCurve, UnitMap};

/// Which iterated system generates the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `T_i = eps_i ∘ S ∘ [alpha T_{i-1}]`: the random perturbation of `S`
    /// is applied after contracting the previous map toward the identity.
    PerturbThenMap,
    /// `T_i = eps_i ∘ alpha[T_{i-1}, S]`: the previous map is contracted
    /// toward `S` itself.
    ContractAbout,
}

/// The estimand: contraction strength and deterministic map, plus the
/// system they parameterize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub alpha: T,
    pub s: UnitMap<T>,
    pub system: SystemKind,
}

impl<T: Scalar> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        match self.system {
            SystemKind::PerturbThenMap if a.abs() > T::one() => Err(Error::Config(format!(
                "perturb-then-map needs |alpha| <= 1, got {a}"
            ))),
            SystemKind::ContractAbout if a.abs() >= T::one() => Err(Error::Config(format!(
                "contract-about needs |alpha| < 1, got {a}"
            ))),
            _ => Ok(()),
        }
    }
}

/// How a map chain is read as a time series of distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ModelKind<T> {
    /// Maps are the transports between consecutive distributions.
    Increment,
    /// Maps are the quantile functions themselves.
    UniformQuantile,
    /// Maps push a fixed reference measure forward to each distribution.
    GeneralizedQuantile { reference: QuantileCurve<T> },
}

/// Provenance attached to a simulated or extracted chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub burn_in: usize,
    pub seed: Option<Seed>,
    pub alpha: Option<f64>,
    pub system: Option<SystemKind>,
}

/// An ordered chain of unit maps sharing one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSeries<T> {
    pub maps: Vec<UnitMap<T>>,
    pub meta: SeriesMeta,
}

impl<T: Scalar> MapSeries<T> {
    pub fn new(maps: Vec<UnitMap<T>>, meta: SeriesMeta) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Input("empty map series".into()))?;
        let m = first.grid_m();
        if let Some(bad) = maps.iter().find(|map| map.grid_m() != m) {
            return Err(Error::GridMismatch(m, bad.grid_m()));
        }
        Ok(Self { maps, meta })
    }

    pub fn grid_m(&self) -> usize {
        self.maps[0].grid_m()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Simulation schedule for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig<T> {
    pub n_steps: usize,
    pub burn_in: usize,
    pub init: UnitMap<T>,
    pub seed: Seed,
    /// Substream index; distinct chains of one experiment use distinct
    /// streams of the same seed.
    #[serde(default)]
    pub stream: u64,
}

impl<T: Scalar> ChainConfig<T> {
    /// Standard schedule: 300 steps, first 100 discarded, identity
    /// start.
    pub fn standard(m: usize, seed: Seed) -> Self {
        Self { n_steps: 300, burn_in: 100, init: UnitMap::identity(m), seed, stream: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps <= self.burn_in {
            return Err(Error::Config(format!(
                "n_steps {} must exceed burn_in {}",
                self.n_steps, self.burn_in
            )));
        }
        Ok(())
    }
}

/// One transition of the iterated system.
///
/// For the perturb-then-map system the composition is associated as
/// `(eps ∘ S) ∘ [alpha T]`; the bracketing is what makes chains driven by a
/// shared noise stream agree bit-for-bit across the model equivalences.
pub fn step<T: Scalar>(
    params: &ModelParams<T>,
    t_prev: &UnitMap<T>,
    eps: &UnitMap<T>,
) -> Result<UnitMap<T>> {
    params.validate()?;
    match params.system {
        SystemKind::PerturbThenMap => {
            let perturbed = eps.compose(&params.s)?;
            perturbed.compose(&t_prev.contract(params.alpha)?)
        }
        SystemKind::ContractAbout => {
            eps.compose(&t_prev.contract_about(params.alpha, &params.s)?)
        }
    }
}

/// Iterates the system from `cfg.init`, discards the burn-in prefix and
/// returns the retained maps. Deterministic given the seed and stream.
pub fn simulate_chain<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ChainConfig<T>,
    spec: &NoiseSpec,
) -> Result<MapSeries<T>> {
    params.validate()?;
    cfg.validate()?;
    spec.validate()?;
    let m = params.s.grid_m();
    if cfg.init.grid_m() != m {
        return Err(Error::GridMismatch(m, cfg.init.grid_m()));
    }
    let mut rng = cfg.seed.substream(cfg.stream);
    let mut t = cfg.init.clone();
    let mut maps = Vec::with_capacity(cfg.n_steps - cfg.burn_in);
    for i in 0..cfg.n_steps {
        let eps = sample_noise_map(spec, m, &mut rng)?;
        t = step(params, &t, &eps)?;
        if i >= cfg.burn_in {
            maps.push(t.clone());
        }
    }
    MapSeries::new(
        maps,
        SeriesMeta {
            burn_in: cfg.burn_in,
            seed: Some(cfg.seed),
            alpha: Some(params.alpha.to_f()),
            system: Some(params.system),
        },
    )
}

/// Reads a map chain as a series of quantile curves.
///
/// For the increment interpretation the returned list starts with `init_q`
/// followed by one propagated curve per map; for the quantile
/// interpretations it has exactly one curve per map.
pub fn series_to_distributions<T: Scalar>(
    series: &MapSeries<T>,
    kind: &ModelKind<T>,
    init_q: &QuantileCurve<T>,
) -> Result<Vec<QuantileCurve<T>>> {
    match kind {
        ModelKind::Increment => {
            let mut curves = Vec::with_capacity(series.len() + 1);
            curves.push(init_q.clone());
            let mut unit = init_q.unit.clone();
            for map in &series.maps {
                unit = map.compose(&unit)?;
                curves.push(QuantileCurve::new(init_q.domain, unit.clone()));
            }
            Ok(curves)
        }
        ModelKind::UniformQuantile => Ok(series
            .maps
            .iter()
            .map(|map| QuantileCurve::new(init_q.domain, map.clone()))
            .collect()),
        ModelKind::GeneralizedQuantile { reference } => series
            .maps
            .iter()
            .map(|map| Ok(QuantileCurve::new(reference.domain, map.compose(&reference.unit)?)))
            .collect(),
    }
}

/// Inverse of [`series_to_distributions`] up to interpolation error:
/// extracts the map chain underlying a series of quantile curves.
pub fn maps_from_distributions<T: Scalar>(
    curves: &[QuantileCurve<T>],
    kind: &ModelKind<T>,
) -> Result<MapSeries<T>> {
    if curves.len() < 2 {
        return Err(Error::Input("need at least two curves".into()));
    }
    let maps: Vec<UnitMap<T>> = match kind {
        ModelKind::Increment => curves
            .windows(2)
            .map(|w| w[1].unit.compose(&w[0].unit.invert()))
            .collect::<Result<_>>()?,
        ModelKind::UniformQuantile => curves.iter().map(|c| c.unit.clone()).collect(),
        ModelKind::GeneralizedQuantile { reference } => {
            let inv_ref = reference.unit.invert();
            curves
                .iter()
                .map(|c| c.unit.compose(&inv_ref))
                .collect::<Result<_>>()?
        }
    };
    MapSeries::new(maps, SeriesMeta::default())
}

/// Outcome of the sufficient stationarity check `|alpha| L_S L_eps < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub l_s: f64,
    pub l_eps: f64,
    /// `|alpha| * L_S * L_eps`.
    pub product: f64,
    /// Contraction rate `sqrt(product)` when the condition holds.
    pub r: f64,
    pub satisfied: bool,
    /// Negative-alpha verdicts additionally require a slope band on the
    /// chain itself, which cannot be verified a priori.
    pub negative_alpha_caveat: bool,
}

/// Evaluates the checkable sufficient condition for a unique stationary
/// solution of the perturb-then-map system.
pub fn check_stationarity_condition<T: Scalar>(
    params: &ModelParams<T>,
    spec: &NoiseSpec,
) -> Result<StationarityReport> {
    if params.system != SystemKind::PerturbThenMap {
        return Err(Error::Config(
            "stationarity condition applies to the perturb-then-map system".into(),
        ));
    }
    params.validate()?;
    let l_s = params.s.max_slope().to_f();
    let l_eps = lipschitz_bound(spec)?;
    let product = params.alpha.abs().to_f() * l_s * l_eps;
    Ok(StationarityReport {
        l_s,
        l_eps,
        product,
        r: product.sqrt(),
        satisfied: product < 1.0,
        negative_alpha_caveat: params.alpha < T::zero(),
    })
}
