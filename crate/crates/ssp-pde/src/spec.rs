//! Equation descriptions and their validity checks.

use ssp_core::{Error, Result};

/// Largest solver step accepted for the reaction–diffusion system. The
/// explicit Euler reaction step is stable while Δt stays well under 2/L, where
/// L bounds the reaction Jacobian; for normalized fields (|u| ≲ 1.6 in
/// practice) L = |1 − 3u²| + 1 ≲ 9, giving Δt < 0.22. We enforce a 0.05 cap
/// for comfortable margin on top of that estimate.
pub const RD_MAX_DT: f64 = 0.05;

/// Which equation a [`PdeSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeKind {
    Heat,
    AdvectionDiffusion,
    ReactionDiffusion,
}

impl PdeKind {
    /// Stable text tag used in file metadata and config files.
    pub fn tag(&self) -> &'static str {
        match self {
            PdeKind::Heat => "heat",
            PdeKind::AdvectionDiffusion => "advection-diffusion",
            PdeKind::ReactionDiffusion => "reaction-diffusion",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "heat" => Ok(PdeKind::Heat),
            "advection-diffusion" => Ok(PdeKind::AdvectionDiffusion),
            "reaction-diffusion" => Ok(PdeKind::ReactionDiffusion),
            other => Err(Error::config(format!(
                "unknown equation kind {other:?}; expected heat, advection-diffusion, or reaction-diffusion"
            ))),
        }
    }

    /// Physical channels a state of this equation carries.
    pub fn channels(&self) -> usize {
        match self {
            PdeKind::ReactionDiffusion => 2,
            _ => 1,
        }
    }
}

/// Full description of one benchmark equation plus its time discretization.
/// Fields that do not apply to a kind (e.g. `velocity` for heat) are ignored
/// by the solvers. `dt` is the solver step; one saved frame advances
/// `substeps` solver steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSpec {
    pub kind: PdeKind,
    /// Diffusivity for the linear kinds.
    pub nu: f64,
    /// Advection velocity (advection-diffusion only).
    pub velocity: (f64, f64),
    /// Channel diffusivities for reaction-diffusion.
    pub diff_u: f64,
    pub diff_v: f64,
    /// Constant forcing offset k_r in the u-channel reaction.
    pub coupling: f64,
    /// Scales the whole reaction term; 0 reduces the system to independent
    /// heat equations per channel.
    pub reaction_strength: f64,
    /// Solver time step.
    pub dt: f64,
    /// Solver steps per saved frame.
    pub substeps: usize,
}

impl PdeSpec {
    /// Heat equation with the default benchmark parameters: ν = 0.05, one
    /// exact step of Δt = 0.05 per frame.
    pub fn heat(nu: f64, dt: f64, substeps: usize) -> Result<Self> {
        let spec = PdeSpec {
            kind: PdeKind::Heat,
            nu,
            velocity: (0.0, 0.0),
            diff_u: 0.0,
            diff_v: 0.0,
            coupling: 0.0,
            reaction_strength: 0.0,
            dt,
            substeps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_heat() -> Self {
        Self::heat(0.05, 0.05, 1).expect("default heat parameters are valid")
    }

    /// Advection-diffusion with velocity `(cx, cy)`.
    pub fn advection_diffusion(nu: f64, cx: f64, cy: f64, dt: f64, substeps: usize) -> Result<Self> {
        let spec = PdeSpec {
            kind: PdeKind::AdvectionDiffusion,
            nu,
            velocity: (cx, cy),
            diff_u: 0.0,
            diff_v: 0.0,
            coupling: 0.0,
            reaction_strength: 0.0,
            dt,
            substeps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_advection_diffusion() -> Self {
        Self::advection_diffusion(0.01, 1.0, 0.5, 0.05, 1)
            .expect("default advection-diffusion parameters are valid")
    }

    /// Two-channel FitzHugh–Nagumo-type reaction-diffusion:
    /// `R_u = u − u³ − k_r − v`, `R_v = u − v`, channel diffusivities
    /// `(diff_u, diff_v)`.
    pub fn reaction_diffusion(
        diff_u: f64,
        diff_v: f64,
        coupling: f64,
        reaction_strength: f64,
        dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        let spec = PdeSpec {
            kind: PdeKind::ReactionDiffusion,
            nu: 0.0,
            velocity: (0.0, 0.0),
            diff_u,
            diff_v,
            coupling,
            reaction_strength,
            dt,
            substeps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_reaction_diffusion() -> Self {
        Self::reaction_diffusion(1e-3, 5e-3, 5e-3, 1.0, 5e-3, 10)
            .expect("default reaction-diffusion parameters are valid")
    }

    /// Checks positivity/stability constraints; every constructor and loader
    /// funnels through here.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("time step dt = {} must be positive", self.dt)));
        }
        if self.substeps == 0 {
            return Err(Error::config("substeps per frame must be at least 1"));
        }
        if self.nu < 0.0 || !self.nu.is_finite() {
            return Err(Error::config(format!("diffusivity nu = {} must be >= 0", self.nu)));
        }
        if !self.velocity.0.is_finite() || !self.velocity.1.is_finite() {
            return Err(Error::config("advection velocity must be finite"));
        }
        if self.diff_u < 0.0 || self.diff_v < 0.0 {
            return Err(Error::config(format!(
                "channel diffusivities ({}, {}) must be >= 0",
                self.diff_u, self.diff_v
            )));
        }
        if !self.coupling.is_finite() || !self.reaction_strength.is_finite() {
            return Err(Error::config("reaction parameters must be finite"));
        }
        if self.kind == PdeKind::ReactionDiffusion && self.dt > RD_MAX_DT {
            return Err(Error::config(format!(
                "reaction-diffusion solver step dt = {} exceeds the stability cap {RD_MAX_DT} \
                 for the explicit reaction update",
                self.dt
            )));
        }
        Ok(())
    }

    /// Physical channels a state of this equation carries.
    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    /// Simulated time between saved frames.
    pub fn frame_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for spec in [
            PdeSpec::default_heat(),
            PdeSpec::default_advection_diffusion(),
            PdeSpec::default_reaction_diffusion(),
        ] {
            assert!(spec.validate().is_ok(), "default {:?} spec must be valid", spec.kind);
        }
    }

    #[test]
    fn unstable_reaction_step_is_rejected_at_construction() {
        let err = PdeSpec::reaction_diffusion(1e-3, 5e-3, 5e-3, 1.0, 0.2, 1);
        assert!(err.is_err(), "dt = 0.2 is beyond the documented reaction stability cap");
    }

    #[test]
    fn nonpositive_steps_are_rejected() {
        assert!(PdeSpec::heat(0.05, 0.0, 1).is_err(), "dt = 0 must fail");
        assert!(PdeSpec::heat(0.05, 0.05, 0).is_err(), "0 substeps must fail");
        assert!(PdeSpec::heat(-0.1, 0.05, 1).is_err(), "negative diffusivity must fail");
    }

    #[test]
    fn kind_tags_round_trip() {
        for kind in [PdeKind::Heat, PdeKind::AdvectionDiffusion, PdeKind::ReactionDiffusion] {
            assert_eq!(PdeKind::from_tag(kind.tag()).unwrap(), kind);
        }
        assert!(PdeKind::from_tag("burgers").is_err(), "unknown tags must fail");
    }
}
