use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionBackend;
use crate::error::{Error, Result};
use crate::tensor::Image;

/// One attack with its strength parameters. Position in a pipeline is the
/// position in the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl AttackSpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), params: BTreeMap::new() }
    }

    pub fn with(mut self, param: &str, value: f64) -> Self {
        self.params.insert(param.to_string(), value);
        self
    }

    /// `name` or `name(k=v,...)`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let args: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.name, args.join(","))
    }
}

/// Validated parameters: declared defaults overridden by the given values.
#[derive(Debug, Clone, PartialEq)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn resolve(attack: &str, defaults: &[(&str, f64)], given: &BTreeMap<String, f64>) -> Result<Self> {
        let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in given {
            if !out.contains_key(k) {
                return Err(Error::InvalidParameter(format!("attack `{attack}` has no parameter `{k}`")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("`{attack}.{k}` = {v}")));
            }
            out.insert(k.clone(), *v);
        }
        Ok(Self(out))
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }

    pub fn non_negative(&self, name: &str) -> Result<f64> {
        let v = self.get(name);
        if v < 0.0 {
            return Err(Error::InvalidParameter(format!("`{name}` = {v} must be non-negative")));
        }
        Ok(v)
    }

    /// Integer parameter within `[lo, hi]`.
    pub fn integer(&self, name: &str, lo: i64, hi: i64) -> Result<i64> {
        let v = self.get(name);
        if v.fract() != 0.0 || v < lo as f64 || v > hi as f64 {
            return Err(Error::InvalidParameter(format!("`{name}` = {v} must be an integer in [{lo}, {hi}]")));
        }
        Ok(v as i64)
    }
}

/// Per-invocation inputs shared by all attacks.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub seed: u64,
    pub backend: Option<&'a DiffusionBackend>,
}

impl<'a> AttackContext<'a> {
    pub fn new(seed: u64) -> Self {
        Self { seed, backend: None }
    }

    pub fn with_backend(mut self, backend: &'a DiffusionBackend) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn require_backend(&self, attack: &str) -> Result<&'a DiffusionBackend> {
        self.backend
            .ok_or_else(|| Error::InvalidParameter(format!("attack `{attack}` needs a diffusion backend")))
    }
}

pub trait Attack: Send + Sync {
    fn name(&self) -> &str;

    /// Accepted parameters and their defaults.
    fn defaults(&self) -> &[(&'static str, f64)];

    fn run(&self, x: &Image, params: &Params, ctx: &AttackContext) -> Result<Image>;
}

pub type AttackFn = fn(&Image, &Params, &AttackContext) -> Result<Image>;

/// Attack backed by a plain function.
pub struct FnAttack {
    pub name: &'static str,
    pub defaults: &'static [(&'static str, f64)],
    pub run: AttackFn,
}

impl Attack for FnAttack {
    fn name(&self) -> &str {
        self.name
    }

    fn defaults(&self) -> &[(&'static str, f64)] {
        self.defaults
    }

    fn run(&self, x: &Image, params: &Params, ctx: &AttackContext) -> Result<Image> {
        (self.run)(x, params, ctx)
    }
}

/// Placeholder for an attack whose implementation lives outside this crate.
pub struct AdapterSlot {
    pub name: &'static str,
    pub defaults: &'static [(&'static str, f64)],
}

impl Attack for AdapterSlot {
    fn name(&self) -> &str {
        self.name
    }

    fn defaults(&self) -> &[(&'static str, f64)] {
        self.defaults
    }

    fn run(&self, _: &Image, _: &Params, _: &AttackContext) -> Result<Image> {
        Err(Error::AdapterAbsent(self.name.to_string()))
    }
}

#[derive(Clone, Default)]
pub struct AttackRegistry {
    attacks: BTreeMap<String, Arc<dyn Attack>>,
}

impl AttackRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Built-in attacks plus empty adapter slots.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for a in super::builtin::builtins() {
            r.register(a);
        }
        for a in super::adapters::slots() {
            r.register(a);
        }
        r
    }

    /// Built-ins with the adapter slots filled by toy stand-ins.
    pub fn with_toy_adapters() -> Self {
        let mut r = Self::with_builtins();
        for a in super::adapters::toy_adapters() {
            r.register(a);
        }
        r
    }

    /// Registers or replaces an attack under its own name.
    pub fn register(&mut self, attack: Arc<dyn Attack>) {
        self.attacks.insert(attack.name().to_string(), attack);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attacks.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Attack>> {
        self.attacks.get(name).ok_or_else(|| Error::UnknownAttack(name.to_string()))
    }

    pub fn validate(&self, spec: &AttackSpec) -> Result<Params> {
        let a = self.get(&spec.name)?;
        Params::resolve(&spec.name, a.defaults(), &spec.params)
    }

    /// Output keeps the input geometry and is clamped to `[-1, 1]`.
    pub fn apply(&self, x: &Image, spec: &AttackSpec, ctx: &AttackContext) -> Result<Image> {
        let a = self.get(&spec.name)?;
        let params = Params::resolve(&spec.name, a.defaults(), &spec.params)?;
        let y = a.run(x, &params, ctx)?;
        x.geometry().ensure_eq(&y.geometry())?;
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!("attack `{}` produced non-finite pixels", spec.name)));
        }
        Ok(y.clamped())
    }
}
