//! How exposure time and ISO move the log-radiance interval a single shot captures.

use stereohdr::camera::{db_to_ratio, ratio_to_db};
use stereohdr::CameraModel;

fn main() -> stereohdr::Result<()> {
    let cam = CameraModel::synthetic();
    let eta = db_to_ratio(3.2);
    println!("SNR floor {:.3} (power ratio) = {:.1} dB", eta, ratio_to_db(eta));
    println!("{:>8} {:>5} {:>8} {:>8} {:>7}  window", "t", "ISO", "low", "high", "width");
    for &t in &[0.001, 0.01, 0.1] {
        for &iso in &cam.iso_set {
            let g = cam.gain(iso);
            let iv = cam.log_radiance_interval(t, g, eta)?;
            let win = cam.pixel_window(g, eta);
            println!(
                "{t:>8} {iso:>5} {:>8.3} {:>8.3} {:>7.3}  [{}, {}]",
                iv.low,
                iv.high,
                iv.width(),
                win.lo,
                win.hi
            );
        }
    }
    // at the floor the SNR equals eta exactly
    let g = cam.gain(100.0);
    let x = cam.min_admissible_signal(g, eta);
    println!("\nfloor signal at ISO 100: {x:.4}, SNR there {:.6}", cam.noise.snr_in_signal(x, g));
    Ok(())
}
