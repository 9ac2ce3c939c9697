//! Built-in experiments, stored as configuration text so they go through the
//! same parser as user files.

use crate::config::{ConfigError, ExperimentConfig};

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

impl CatalogEntry {
    pub fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(self.text)
    }
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "lshape-laplace",
        summary: "Dirichlet Laplacian on the L-shaped domain (reentrant corner), beta = 0",
        text: "\
[experiment]
name = lshape-laplace
description = lowest Dirichlet eigenvalue of -Laplace on the L-shape, reported as 2*mu
[domain]
shape = l_shape(-1, -1, 1, 1, 0, 0, 1, 1)
box = -2*pi/5, -2*pi/5, 2*pi/5, 2*pi/5
[potential]
v = box
[model]
beta = 0
[grid]
resolutions = 4*pi/300, 4*pi/400, 4*pi/500, 4*pi/600, 4*pi/700
[flow]
init = linear
[reference]
mu = 9.639723844021
source = literature
fit = reference
scale = 2
",
    },
    CatalogEntry {
        name: "disk-linear",
        summary: "unit disk, beta = 0: closed-form eigenvalue j01^2 / 2",
        text: "\
[experiment]
name = disk-linear
[domain]
shape = circle(0, 0, 1)
box = -1.4, -1.4, 1.4, 1.4
[potential]
v = box
[model]
beta = 0
[grid]
resolutions = 0.1, 0.05, 0.025
[reference]
mu = 2.891592981473392
source = analytic
fit = reference
",
    },
    CatalogEntry {
        name: "square-harmonic",
        summary: "square with harmonic trap, beta = 50, plain cubic model",
        text: "\
[experiment]
name = square-harmonic
[domain]
shape = rectangle(-2, -2, 2, 2)
box = -5*pi/6, -5*pi/6, 5*pi/6, 5*pi/6
[potential]
v = harmonic
[model]
beta = 50
rescale = off
[grid]
resolutions = 5*pi/180, 5*pi/240, 5*pi/300, 5*pi/360
[reference]
mu = 6.188543396102850
source = literature
fit = reference
",
    },
    CatalogEntry {
        name: "square-harmonic-rescaled",
        summary: "same square problem solved in the rescaled variable",
        text: "\
[experiment]
name = square-harmonic-rescaled
[domain]
shape = rectangle(-2, -2, 2, 2)
box = -5*pi/6, -5*pi/6, 5*pi/6, 5*pi/6
[potential]
v = harmonic
[model]
kind = cubic-rescaled
beta = 50
rescale = on
[grid]
resolutions = 5*pi/180, 5*pi/240, 5*pi/300, 5*pi/360
[reference]
mu = 6.188543396102850
source = literature
fit = reference
",
    },
    CatalogEntry {
        name: "circle-lattice",
        summary: "disk of radius 2 in a harmonic plus optical lattice potential, beta = 200",
        text: "\
[experiment]
name = circle-lattice
[domain]
shape = circle(0, 0, 2)
box = -pi, -pi, pi, pi
[potential]
v = harmonic_lattice(50, pi)
[model]
beta = 200
[grid]
resolutions = pi/40, pi/50, pi/60, pi/70, pi/80, pi/90, pi/100, pi/120, pi/135, pi/160
[reference]
mu = 68.0881
energy = 52.8319
source = literature
fit = reference
note = reference values carry 6 significant digits; the fitted rate saturates near that level
",
    },
    CatalogEntry {
        name: "ellipse-box",
        summary: "ellipse with semi-axes 1.5 and 2, no potential, beta = 4, plus the first excited state",
        text: "\
[experiment]
name = ellipse-box
[domain]
shape = ellipse(1.5, 2)
box = -pi, -pi, pi, pi
[potential]
v = box
[model]
beta = 4
[grid]
resolutions = pi/60, pi/90, pi/120, pi/180
[reference]
mu = 1.8055
source = literature
fit = self-finest
note = reference has 5 significant digits; rates are fitted against the finest run
[excited]
index = 1
",
    },
    CatalogEntry {
        name: "ellipse-shaped-potential",
        summary: "ellipse with a potential shaped like a scaled copy of the boundary, beta = 4",
        text: "\
[experiment]
name = ellipse-shaped-potential
[domain]
shape = ellipse(1.5, 2)
box = -pi, -pi, pi, pi
[potential]
v = ellipse_shaped(4, 2, 1.5, 0.3)
[model]
beta = 4
[grid]
resolutions = pi/60, pi/90, pi/120
[reference]
mu = 2.3411
source = literature
fit = self-finest
note = the potential's exact form is a guess; the computed value does not match the reference
",
    },
    CatalogEntry {
        name: "crescent-obstacle",
        summary: "crescent (disk minus offset disk) with a Gaussian obstacle, beta = 10",
        text: "\
[experiment]
name = crescent-obstacle
[domain]
shape = csg_difference(circle(0, 0, 0.9), circle(0.45, 0, 0.7))
box = -pi/3, -pi/3, pi/3, pi/3
[potential]
v = gaussian_obstacle
[model]
beta = 10
[grid]
resolutions = pi/90, pi/120, pi/180, pi/240, pi/360
[reference]
source = geometry-underspecified
fit = self-finest
note = literature mu 86.5431 belongs to a crescent whose radii and offset are not given
",
    },
    CatalogEntry {
        name: "crescent-excited",
        summary: "crescent at weak coupling: excited-state flow started from the second linear mode",
        text: "\
[experiment]
name = crescent-excited
[domain]
shape = csg_difference(circle(0, 0, 0.9), circle(0.45, 0, 0.7))
box = -pi/3, -pi/3, pi/3, pi/3
[potential]
v = gaussian_obstacle
[model]
beta = 0.001
[grid]
resolutions = pi/90, pi/120, pi/180
[reference]
source = none
[excited]
index = 1
",
    },
    CatalogEntry {
        name: "sector-quintic",
        summary: "quarter disk with a quantum-pendulum potential, cubic-quintic model",
        text: "\
[experiment]
name = sector-quintic
[domain]
shape = sector(0, 0, 2, 0, pi/2)
box = -5*pi/6, -5*pi/6, 5*pi/6, 5*pi/6
[potential]
v = quantum_pendulum
[model]
kind = cubic-quintic
beta = 1
gamma = 1
[grid]
resolutions = pi/60, pi/90, pi/120, pi/180, pi/240
[reference]
source = geometry-underspecified
fit = self-finest
note = literature mu 2.432 belongs to a sector whose radius and angle are not given
",
    },
    CatalogEntry {
        name: "ellipse-hoi",
        summary: "ellipse with higher-order interaction, beta = delta = 10, dt = 0.001",
        text: "\
[experiment]
name = ellipse-hoi
[domain]
shape = ellipse(1.5, 2)
box = -pi, -pi, pi, pi
[potential]
v = box
[model]
kind = hoi-split
beta = 10
delta = 10
[grid]
resolutions = pi/30, pi/45, pi/60, pi/90
[flow]
dt = 0.001
[reference]
mu = 6.1360
energy = 5.7685
source = literature
fit = self-finest
note = the energy does not match the reference under the standard energy functional
",
    },
];

pub fn find(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}
