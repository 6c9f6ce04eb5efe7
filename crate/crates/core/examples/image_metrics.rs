//! SSIM, PSNR, the feature-space perceptual distance and subject
//! consistency on a rendered sequence and degraded copies of it.
//!
//! `cargo run --example image_metrics`

use posesprite::config::Canvas;
use posesprite::dataset::synthetic::SyntheticCharacter;
use posesprite::dataset::{composite_background, WHITE};
use posesprite::metrics::{lpips, psnr, ssim, subject_consistency, PyramidExtractor};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let canvas = Canvas { height: 64, width: 64 };
    let a = SyntheticCharacter::from_seed("a", 1);
    let b = SyntheticCharacter::from_seed("b", 2);
    let rgb = |c: &SyntheticCharacter| -> Vec<_> {
        c.sequence("wave", 6, canvas).frames().iter().map(|f| composite_background(f.pixels(), WHITE)).collect()
    };
    let (fa, fb) = (rgb(&a), rgb(&b));
    let blurred = fa[0].mapv(|v| 0.7 * v + 0.3 * 0.5);

    println!("{:<28} {:>8} {:>8} {:>8}", "pair", "SSIM", "PSNR", "LPIPS");
    for (name, x) in [("identical", &fa[0]), ("contrast-reduced", &blurred), ("other character", &fb[0])] {
        println!(
            "{name:<28} {:>8.4} {:>8.2} {:>8.4}",
            ssim(&fa[0], x)?,
            psnr(&fa[0], x)?,
            lpips(&fa[0], x, &PyramidExtractor)?
        );
    }

    let mut mixed = fa.clone();
    mixed[3] = fb[3].clone();
    println!("subject consistency, one character: {:.4}", subject_consistency(&fa, &PyramidExtractor)?);
    println!("subject consistency, identity swap:  {:.4}", subject_consistency(&mixed, &PyramidExtractor)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
