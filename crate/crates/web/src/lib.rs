//! WebAssembly bindings for the browser demo. Results cross the boundary as
//! JSON strings.

pub mod demo;

use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Histogram of relaxed edge samples, see [`demo::concrete_histogram`].
#[wasm_bindgen(js_name = concreteHistogram)]
pub fn concrete_histogram(psi: f64, omega: f64, draws: u32, bins: usize, seed: u64) -> Result<String, JsError> {
    to_js(demo::concrete_histogram(psi, omega, draws, bins, seed))
}

#[wasm_bindgen]
pub struct DemoSession {
    inner: demo::Session,
}

#[wasm_bindgen]
impl DemoSession {
    #[wasm_bindgen(constructor)]
    pub fn new(
        setting: u8,
        n: usize,
        nodes: usize,
        important: usize,
        feat_dim: usize,
        seed: u64,
    ) -> Result<DemoSession, JsError> {
        demo::Session::new(setting, n, nodes, important, feat_dim, seed)
            .map(|inner| DemoSession { inner })
            .map_err(|e| JsError::new(&e))
    }

    pub fn graph(&self) -> Result<String, JsError> {
        to_js(Ok(self.inner.graph()))
    }

    pub fn train(&mut self, k: usize) -> Result<String, JsError> {
        to_js(self.inner.train(k))
    }

    pub fn explain(&self, lambda_edge: f64, iters: usize, top_m: usize) -> Result<String, JsError> {
        to_js(self.inner.explain(lambda_edge, iters, top_m))
    }
}
