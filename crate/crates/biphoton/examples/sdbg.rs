use biphoton::grid::FrequencyGrid;
use biphoton::source;
use biphoton::units;

fn main() {
    let grid = FrequencyGrid::symmetric_two_arm(628.0, 790.0, 2.3e13, 160).unwrap();
    let jsi = source::diagonal_gaussian_amplitude(4.5e12, 1.8e12, &grid).unwrap().intensity();
    let res_sigma = units::fwhm_to_sigma(0.02);
    let seed_sigma = units::bandwidth_rad_s_to_nm(units::hz_to_rad_s(30.0 * 1e9), 790.0);
    println!("res_sigma {res_sigma:.4} nm, seed_sigma {seed_sigma:.4} nm");

    let direct = |x: f64, y: f64| -> f64 {
        let g = jsi.grid();
        let mut acc = 0.0;
        for (i, &ns) in g.signal_nu().iter().enumerate() {
            let ls = units::angular_to_wavelength_nm(g.signal_omega(i));
            let _ = ns;
            let ws = (-(ls - x) * (ls - x) / (2.0 * res_sigma * res_sigma)).exp();
            if ws < 1e-280 { continue; }
            for (j, _ni) in g.idler_nu().iter().enumerate() {
                let li = units::angular_to_wavelength_nm(g.idler_omega(j));
                let wi = (-(li - y) * (li - y) / (2.0 * seed_sigma * seed_sigma)).exp();
                acc += jsi.values()[(i, j)] * ws * wi;
            }
        }
        acc * g.cell_area()
    };
    let r1 = jsi.gaussian_raster(&[628.0, 627.78], &[790.0, 790.23], res_sigma, seed_sigma);
    println!("raster (628,790) {:.4e} vs direct {:.4e}", r1[(0, 0)], direct(628.0, 790.0));
    println!("raster (627.78,790.23) {:.4e} vs direct {:.4e}", r1[(1, 1)], direct(627.78, 790.23));
    // kernel width vs grid cell!
    let g = jsi.grid();
    let cell_nm_s = units::bandwidth_rad_s_to_nm(g.signal_step(), 628.0);
    let cell_nm_i = units::bandwidth_rad_s_to_nm(g.idler_step(), 790.0);
    println!("grid cell: {:.4} nm (signal), {:.4} nm (idler); res kernel sigma {:.4}", cell_nm_s, cell_nm_i, res_sigma);
}
