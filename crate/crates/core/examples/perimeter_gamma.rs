//! Facet-perimeter histograms and maximum-likelihood gamma fits.

use meshdex::analysis::primitives::{icosphere, prism};
use meshdex::analysis::{fit_gamma, perimeter_histogram, sample_gamma, BinPolicy, Histogram};
use meshdex::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Recover known parameters from synthetic samples.
    let samples = sample_gamma(3.0, 0.5, 100_000, 7)?;
    let fit = fit_gamma(&samples)?;
    println!(
        "true shape 3.0 scale 0.5 -> fitted shape {:.4} scale {:.4} in {} iterations",
        fit.shape, fit.scale, fit.iterations
    );
    let hist = Histogram::from_samples(
        BinPolicy::Fixed {
            min: 0.0,
            max: 5.0,
            bins: 20,
        },
        &samples,
    )?;
    print!("{}", hist.to_text());

    // Perimeters of a small corpus, on logarithmic bins.
    let corpus = [icosphere(3, 1.0), prism(12, 0.5, 2.0)];
    let policy = BinPolicy::Log {
        min: 0.05,
        max: 10.0,
        bins: 12,
    };
    let hist = perimeter_histogram(&corpus, policy, &Vocabulary::default())?;
    println!("corpus histogram mode near {:?}", hist.mode());
    Ok(())
}
