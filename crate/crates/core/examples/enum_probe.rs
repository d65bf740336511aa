use edgeperf::enumerate::{enumerate_cells, EnumerationMode};
use edgeperf::network::{expand_network, NetworkSpec};
use rayon::prelude::*;

fn main() {
    let t0 = std::time::Instant::now();
    let cells = enumerate_cells(7, 9, EnumerationMode::Full).unwrap();
    println!("full space: {} cells in {:.1?}", cells.len(), t0.elapsed());
    let spec = NetworkSpec::default();
    let t1 = std::time::Instant::now();
    let (min, max) = cells
        .par_iter()
        .map(|c| {
            let p = expand_network(c, &spec).unwrap().total_params;
            (p, p)
        })
        .reduce(|| (u64::MAX, 0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    println!("params: min {min} max {max} in {:.1?}", t1.elapsed());
}
