//! Print the built-in test roads and round-trip one through its file format.

use pfc_lab::road::{builtin_suite, RoadProfile, KMPH};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for road in builtin_suite() {
        println!(
            "{} ({:.0} m, {})",
            road.name,
            road.total_length(),
            if road.is_flat() { "flat" } else { "graded" }
        );
        for (start, seg) in road.segment_starts() {
            println!(
                "  {start:>6.0} m  {:>5.0} m  grade {:>+5.1}%  limit {:>3.0} km/h",
                seg.length,
                seg.grade * 100.0,
                road.effective_limit(seg) / KMPH
            );
        }
    }

    let road = &builtin_suite()[4];
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("road.json");
    std::fs::write(&path, road.to_json())?;
    let back = RoadProfile::load(&path)?;
    println!("\n{} survives a file round trip: {}", road.name, &back == road);
    Ok(())
}
