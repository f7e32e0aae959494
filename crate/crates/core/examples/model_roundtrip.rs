//! Builds a small CNN, writes it in the RLNS model format, reads it back and
//! prints its layer table.
//!
//!     cargo run --example model_roundtrip [OUT_DIR]

use std::path::PathBuf;

use relevance_lens::cli::describe_model;
use relevance_lens::nn::{encode_model, load_model, save_model};
use relevance_lens::synthetic::random_cnn;

fn main() -> relevance_lens::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("relevance-lens-examples"));
    std::fs::create_dir_all(&dir).unwrap();

    let model = random_cnn(3, 16, 16, 7);
    let path = dir.join("cnn.rlns");
    save_model(&model, &path)?;
    let loaded = load_model(&path)?;
    assert_eq!(encode_model(&model), encode_model(&loaded));

    println!("wrote {}", path.display());
    print!("{}", describe_model(&loaded));
    Ok(())
}
