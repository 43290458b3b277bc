//! Per-iteration records shared by every optimizer in the crate.

/// One row of a convergence trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Seconds since the run started, diagnostics excluded.
    pub wall_clock_s: f64,
    pub loss: f64,
    pub grad_norm: f64,
    /// `‖Ĥ − H_B‖` when probing is enabled.
    pub hessian_err: Option<f64>,
    pub lambda_used: Option<f64>,
}

/// Final iterate and the trace that led to it.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerRun {
    pub x: Vec<f64>,
    pub trace: Vec<TraceRecord>,
}

/// Monotonic run clock that can exclude diagnostic work.
#[derive(Debug)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
    excluded: f64,
}

impl Default for Stopwatch {
    fn default() -> Self {
        Self::start()
    }
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
            excluded: 0.0,
        }
    }

    fn raw(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        // no monotonic clock without host bindings
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    pub fn elapsed(&self) -> f64 {
        (self.raw() - self.excluded).max(0.0)
    }

    /// Runs `f` without charging its duration to the run.
    pub fn exclude<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let before = self.raw();
        let out = f();
        self.excluded += self.raw() - before;
        out
    }
}
