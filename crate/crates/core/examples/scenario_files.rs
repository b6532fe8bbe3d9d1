//! Scenarios are plain TOML. This prints the built-in default scenario,
//! parses it back and shows that the round trip is byte-identical.

use convergence::sim::Scenario;

fn main() -> anyhow::Result<()> {
    let text = Scenario::default_scenario().to_toml();
    print!("{text}");
    let again = Scenario::from_toml(&text)?.to_toml();
    println!("\n# round trip identical: {}", again == text);
    Ok(())
}
