//! Browser demo: a planted synthetic face model explored interactively.
//!
//! Compiles to WebAssembly with `wasm-pack build --target web`; the page in
//! `static/` drives three operations — the AU gallery, per-frame sparse
//! encoding, and the sparsity/accuracy tradeoff curve.

use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

use dfecs_core::eval::{ve_curve_by_k, variance_explained};
use dfecs_core::geometry::Template;
use dfecs_core::io::{au_arrows_svg, au_gallery_svg, curve_svg};
use dfecs_core::solvers::positive_lasso;
use dfecs_core::synthetic::{generate, SyntheticSpec};

/// A planted model plus the noise-free KPM dataset it generated.
#[wasm_bindgen]
pub struct Demo {
    template: Template,
    aus: DMatrix<f64>,
    x: DMatrix<f64>,
}

#[wasm_bindgen]
impl Demo {
    /// Build a fresh planted model. The AUs are the planted `U A` columns
    /// rescaled to unit norm, so sliders act in comparable units.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Demo {
        let ds = generate(&SyntheticSpec {
            subjects: 3,
            frames_per_subject: 25,
            seed: seed as u64,
            ..SyntheticSpec::default()
        });
        let mut aus = &ds.u_true * &ds.a_true;
        for j in 0..aus.ncols() {
            let n = aus.column(j).norm();
            if n > 1e-12 {
                let col = aus.column(j) / n;
                aus.set_column(j, &col);
            }
        }
        Demo {
            template: ds.template,
            aus,
            x: ds.x_true,
        }
    }

    pub fn num_aus(&self) -> usize {
        self.aus.ncols()
    }

    pub fn num_frames(&self) -> usize {
        self.x.ncols()
    }

    /// One AU as an arrow plot.
    pub fn au_svg(&self, index: usize, scale: f64) -> String {
        if index >= self.aus.ncols() {
            return String::new();
        }
        let col: Vec<f64> = self.aus.column(index).iter().copied().collect();
        au_arrows_svg(&self.template, &col, scale, 0.2).unwrap_or_default()
    }

    /// Every AU in a grid.
    pub fn gallery_svg(&self, scale: f64) -> String {
        au_gallery_svg(&self.template, &self.aus, scale, 0.2, 4).unwrap_or_default()
    }

    /// Encode one frame at the given penalty; returns `ve|c0,c1,...`.
    pub fn encode_frame(&self, frame: usize, alpha: f64) -> String {
        if frame >= self.x.ncols() {
            return String::new();
        }
        let y: DVector<f64> = self.x.column(frame).into_owned();
        let Ok(v) = positive_lasso(&self.aus, &y, alpha) else {
            return String::new();
        };
        let recon = DMatrix::from_columns(&[&self.aus * &v]);
        let target = DMatrix::from_columns(&[y]);
        let ve = if target.norm_squared() > 0.0 {
            variance_explained(&target, &recon).unwrap_or(0.0)
        } else {
            100.0
        };
        let codes: Vec<String> = v.iter().map(|c| format!("{c:.4}")).collect();
        format!("{ve:.2}|{}", codes.join(","))
    }

    /// The displaced face for one frame at a blend factor, as an arrow plot.
    pub fn frame_svg(&self, frame: usize, scale: f64) -> String {
        if frame >= self.x.ncols() {
            return String::new();
        }
        let col: Vec<f64> = self.x.column(frame).iter().copied().collect();
        au_arrows_svg(&self.template, &col, scale, 0.2).unwrap_or_default()
    }

    /// Dataset VE against the active-AU budget, rendered as an SVG plot.
    pub fn ve_curve_svg(&self, max_k: usize) -> String {
        let Ok(curve) = ve_curve_by_k(&self.aus, &self.x, max_k.clamp(1, self.aus.ncols())) else {
            return String::new();
        };
        curve_svg(&curve, "active AUs per frame", "variance explained (%)").unwrap_or_default()
    }
}
