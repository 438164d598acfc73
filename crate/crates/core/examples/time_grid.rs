// Map raw observed times onto the normalized `K`-bin grid.

use triplesurv::data::{assign_bin, bin_midpoint, build_time_grid, Sample, SurvivalDataset};

pub fn run_example() -> triplesurv::Result<()> {
    let times = [12.0, 30.0, 45.0, 60.0, 100.0, 150.0];
    let events = [true, true, false, true, true, false];
    let samples = times
        .iter()
        .zip(events)
        .map(|(&t, e)| Sample::new(vec![0.0], t, e))
        .collect::<triplesurv::Result<Vec<_>>>()?;
    let ds = SurvivalDataset::new(samples, vec!["x".into()])?;

    let grid = build_time_grid(&ds, 10)?;
    println!("delta_t = {:.4}, T'min = {:.4}, T1max = {:.4}", grid.delta_t, grid.t_min_prime, grid.t_max_1);
    for s in &ds.samples {
        let t_norm = grid.normalize(s.time);
        let bin = assign_bin(t_norm, grid.k_bins)?;
        println!(
            "t = {:>6.1} event = {} -> t_norm = {t_norm:.4}, bin {bin:>2} (midpoint {:.3})",
            s.time,
            s.event as u8,
            bin_midpoint(bin, grid.k_bins)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
