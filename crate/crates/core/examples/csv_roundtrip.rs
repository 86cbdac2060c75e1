//! Reads the worked-example dataset, prints its baseline summary and writes
//! it back out unchanged.
//!
//!     cargo run --example csv_roundtrip

use std::path::Path;

use hybridssr::io::table::{summary_table, OutputFormat};
use hybridssr::model::summarize;
use hybridssr::{load_dataset, save_dataset};

fn main() -> hybridssr::Result<()> {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/worked_example.csv");
    let data = load_dataset(&src)?;
    summary_table(&summarize(&data, false)?).write(OutputFormat::Markdown, std::io::stdout())?;

    let out = std::env::temp_dir().join("hybridssr_roundtrip.csv");
    save_dataset(&data, &out)?;
    let again = load_dataset(&out)?;
    assert_eq!(data, again);
    println!(
        "\nwrote {} ({} subjects, identical on reload)",
        out.display(),
        again.len()
    );
    Ok(())
}
