//! Shared evaluation context binding a pattern, a model and a window.

use crate::error::Error;
use crate::geometry::{Configuration, Cube, NeighborIndex, ObservationDomain};
use crate::model::Model;
use crate::quadrature::QuadratureSpec;

/// Binds one observed configuration to a model and an observation domain,
/// caching the neighbor index all operations share. Immutable once built;
/// operations may run concurrently.
pub struct Workspace<'a> {
    model: &'a dyn Model,
    config: &'a Configuration,
    domain: &'a ObservationDomain,
    quad: QuadratureSpec,
    index: NeighborIndex<'a>,
}

impl<'a> Workspace<'a> {
    pub fn new(
        model: &'a dyn Model,
        config: &'a Configuration,
        domain: &'a ObservationDomain,
        quad: QuadratureSpec,
    ) -> Result<Self, Error> {
        if config.dim() != model.dim() || domain.dim() != model.dim() {
            return Err(Error::Geometry(
                crate::geometry::GeometryError::DimensionMismatch {
                    expected: model.dim(),
                    got: config.dim(),
                },
            ));
        }
        let extended = domain.extended();
        let cell = model.range().max(extended.side / 50.0).max(1e-9);
        let index = NeighborIndex::new(config, cell);
        Ok(Workspace {
            model,
            config,
            domain,
            quad,
            index,
        })
    }

    pub fn model(&self) -> &dyn Model {
        self.model
    }

    pub fn config(&self) -> &Configuration {
        self.config
    }

    pub fn domain(&self) -> &ObservationDomain {
        self.domain
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub(crate) fn index(&self) -> &NeighborIndex<'a> {
        &self.index
    }

    /// Checks that `region ⊕ D` lies inside the observed extended window.
    pub(crate) fn check_guard(&self, region: &Cube) -> Result<(), Error> {
        let needed = self.model.range();
        let extended = self.domain.extended();
        if !region.expanded_within(needed, &extended) {
            return Err(Error::InsufficientGuard {
                needed,
                available: self.domain.guard,
            });
        }
        Ok(())
    }
}
