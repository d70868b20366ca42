use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::association::AssocConfig;
use crate::convlstm::{AdamHyper, LossKind, Objective};
use crate::error::{Error, Result};
use crate::gm::PruneConfig;
use crate::grid::BirthDefaults;
use crate::kv;
use crate::metrics::OspaConfig;
use crate::scalar::{Mat4, Real, Vec2};
use crate::update::UpdateConfig;

/// What the predictor emits before the network has been trained once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Warmup {
    /// Zero PDD, i.e. the previous PHD map is carried forward.
    Zero,
    /// Untrained network output as soon as the batch holds one map.
    Network,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

macro_rules! text_enum {
    ($ty:ident { $($var:ident => $s:literal),+ }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$var),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($ty), " `{}`"), s))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$var => $s,)+ })
            }
        }
    };
}

text_enum!(Warmup { Zero => "zero", Network => "network" });
text_enum!(Precision { F32 => "f32", F64 => "f64" });

/// Every tunable of a tracking run. Field names double as config keys.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    // grid and predictor
    pub sampling_period: f64,
    pub border: usize,
    pub min_separation: f64,
    pub batch_len: usize,
    pub epochs: usize,
    pub filters: usize,
    pub loss: LossKind,
    pub relu_output: bool,
    pub kernel_l2: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup: Warmup,
    /// Added to the diagonal of every carried covariance at prediction.
    pub process_noise: f64,
    // update
    pub p_d: f64,
    pub omega_t: f64,
    pub sigma_birth: f64,
    pub omega_birth: f64,
    pub birth_width: f64,
    pub birth_height: f64,
    pub clutter_rate: f64,
    pub r: f64,
    pub w_span: f64,
    pub h_span: f64,
    pub prune_truncate: f64,
    pub merge_dist: f64,
    // association
    pub a_t: u32,
    pub a_birth: u32,
    pub a_am: u32,
    pub a_at: u32,
    pub coast_decaying: bool,
    // input and evaluation
    pub conf_thresh: f64,
    pub iou_thresh: f64,
    pub ospa_p: f64,
    pub ospa_c: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling_period: 10.0,
            border: 5,
            min_separation: 30.0,
            batch_len: 24,
            epochs: 20,
            filters: 16,
            loss: LossKind::Kl,
            relu_output: true,
            kernel_l2: 1e-4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            warmup: Warmup::Zero,
            process_noise: 0.0,
            p_d: 0.9,
            omega_t: 0.5,
            sigma_birth: 20.0,
            omega_birth: 0.1,
            birth_width: 30.0,
            birth_height: 60.0,
            clutter_rate: 2.0,
            r: 10.0,
            w_span: 100.0,
            h_span: 100.0,
            prune_truncate: 1e-5,
            merge_dist: 4.0,
            a_t: 5,
            a_birth: 5,
            a_am: 1,
            a_at: 2,
            coast_decaying: true,
            conf_thresh: f64::NEG_INFINITY,
            iou_thresh: 0.5,
            ospa_p: 1.0,
            ospa_c: 100.0,
            seed: 0,
            precision: Precision::F64,
        }
    }
}

fn num(e: &kv::Entry) -> Result<f64> {
    // `inf` and `-inf` are accepted here for thresholds.
    e.value.parse::<f64>().ok().filter(|v| !v.is_nan()).ok_or_else(|| Error::Config(format!("line {}: bad number `{}` for `{}`", e.line, e.value, e.key)))
}

fn parsed<V: FromStr>(e: &kv::Entry) -> Result<V>
where
    V::Err: fmt::Display,
{
    e.value.parse().map_err(|err| Error::Config(format!("line {}: {err}", e.line)))
}

macro_rules! fields {
    ($m:ident) => {
        $m!(
            sampling_period: num, border: usize, min_separation: num, batch_len: usize, epochs: usize,
            filters: usize, loss: parsed, relu_output: bool, kernel_l2: num, lr: num, beta1: num,
            beta2: num, adam_eps: num, warmup: parsed, process_noise: num, p_d: num, omega_t: num,
            sigma_birth: num, omega_birth: num, birth_width: num, birth_height: num, clutter_rate: num,
            r: num, w_span: num, h_span: num, prune_truncate: num, merge_dist: num, a_t: u32,
            a_birth: u32, a_am: u32, a_at: u32, coast_decaying: bool, conf_thresh: num,
            iou_thresh: num, ospa_p: num, ospa_c: num, seed: u64, precision: parsed
        )
    };
}

impl PipelineConfig {
    /// Applies `key = value` overrides on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in kv::parse(text)? {
            cfg.set(&e)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, e: &kv::Entry) -> Result<()> {
        macro_rules! assign {
            ($($name:ident: $how:ident),+) => {
                match e.key.as_str() {
                    $(stringify!($name) => { self.$name = assign!(@ $how e); })+
                    other => return Err(Error::Config(format!("line {}: unknown key `{other}`", e.line))),
                }
            };
            (@ num $e:ident) => { num($e)? };
            (@ parsed $e:ident) => { parsed($e)? };
            (@ usize $e:ident) => { $e.usize()? };
            (@ u32 $e:ident) => { $e.u32()? };
            (@ u64 $e:ident) => { $e.u64()? };
            (@ bool $e:ident) => { $e.bool()? };
        }
        fields!(assign);
        Ok(())
    }

    /// `key = value` lines that [`PipelineConfig::parse`] maps back to `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($name:ident: $how:ident),+) => {
                $( let _ = writeln!(out, "{} = {}", stringify!($name), self.$name); )+
            };
        }
        fields!(emit);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.sampling_period > 0.0 && self.sampling_period.is_finite()) {
            return bad("sampling_period must be positive");
        }
        if self.batch_len == 0 || self.filters == 0 {
            return bad("batch_len and filters must be positive");
        }
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return bad("p_d must lie in (0, 1]");
        }
        if !(self.r > 0.0 && self.sigma_birth > 0.0) {
            return bad("r and sigma_birth must be positive");
        }
        if !(self.process_noise >= 0.0 && self.clutter_rate >= 0.0 && self.omega_birth >= 0.0) {
            return bad("process_noise, clutter_rate and omega_birth must be non-negative");
        }
        if !(self.w_span > 0.0 && self.h_span > 0.0 && self.birth_width > 0.0 && self.birth_height > 0.0) {
            return bad("spans and birth box sizes must be positive");
        }
        if self.a_at == 0 {
            return bad("a_at must be positive");
        }
        if !(self.ospa_p >= 1.0 && self.ospa_c > 0.0) {
            return bad("ospa_p must be at least 1 and ospa_c positive");
        }
        if !(self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return bad("bad ADAM hyper-parameters");
        }
        Ok(())
    }

    pub fn update_config<T: Real>(&self, area: f64) -> UpdateConfig<T> {
        let mut u = UpdateConfig::with_area(T::lit(area));
        u.r = Mat4::identity() * T::lit(self.r);
        u.p_d = T::lit(self.p_d);
        u.clutter_rate = T::lit(self.clutter_rate);
        u.w_span = T::lit(self.w_span);
        u.h_span = T::lit(self.h_span);
        u.omega_t = T::lit(self.omega_t);
        u.birth = BirthDefaults {
            covariance: Mat4::identity() * T::lit(self.sigma_birth),
            weight: T::lit(self.omega_birth),
            age: self.a_birth,
            motion: Vec2::zeros(),
            width: T::lit(self.birth_width),
            height: T::lit(self.birth_height),
        };
        u.prune = PruneConfig { truncate: T::lit(self.prune_truncate), merge_dist: T::lit(self.merge_dist) };
        u
    }

    pub fn assoc_config(&self) -> AssocConfig {
        AssocConfig {
            a_t: self.a_t,
            a_birth: self.a_birth,
            a_am: self.a_am,
            a_at: self.a_at,
            coast_decaying: self.coast_decaying,
        }
    }

    pub fn objective<T: Real>(&self) -> Objective<T> {
        Objective { loss: self.loss, kernel_l2: T::lit(self.kernel_l2), scale: T::one(), relu_output: self.relu_output }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn ospa<T: Real>(&self) -> OspaConfig<T> {
        OspaConfig { p: T::lit(self.ospa_p), c: T::lit(self.ospa_c) }
    }
}
