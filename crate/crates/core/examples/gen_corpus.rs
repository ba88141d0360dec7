//! Writes a planted two-context corpus as COCO-style annotations.
//!
//! `cargo run --example gen_corpus -- <out.json> [seed] [n_images]`

use std::env;
use std::fs;

use cobranch::synth::{generate, PlantedCorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = env::args().skip(1);
    let out = args
        .next()
        .ok_or("usage: gen_corpus <out.json> [seed] [n_images]")?;
    let spec = PlantedCorpusSpec {
        seed: args.next().map(|s| s.parse()).transpose()?.unwrap_or(0),
        n_images: args.next().map(|s| s.parse()).transpose()?.unwrap_or(500),
        ..Default::default()
    };
    let corpus = generate(&spec);
    let mut text = serde_json::to_string(&corpus.dataset.to_coco_json())?;
    text.push('\n');
    fs::write(&out, text)?;
    println!(
        "{} images, {} categories -> {out}",
        corpus.dataset.n_images(),
        corpus.dataset.n_categories()
    );
    Ok(())
}
