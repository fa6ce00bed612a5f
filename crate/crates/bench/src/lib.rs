//! Shared inputs for the benchmarks.

use drofolio::simulation::{simulate_panel, DgpParams};
use drofolio::ReturnPanel;

/// Synthetic two-factor panel of `p` assets over `t` periods.
pub fn fixture_panel(p: usize, t: usize, seed: u64) -> ReturnPanel {
    simulate_panel(&DgpParams::fixture(p), t, seed)
        .expect("fixture parameters are valid")
        .0
}
