//! Render one text under several writer styles, including a forced glyph
//! merge that makes two characters pixel-identical for one writer.
//!
//! `cargo run --release -p wsnet --example render_styles [out_dir]`

use wsnet::dataset::{generate_writer_style, render_line, AmbiguityChoice};

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "style_samples".into());
    std::fs::create_dir_all(&out).unwrap();

    let text = "hello z01 lozenge";
    for seed in [0u64, 1, 2, 3, 4] {
        let style = generate_writer_style(seed);
        let img = render_line(&style, text, 48).unwrap();
        let path = format!("{out}/writer{seed}.png");
        img.save(&path).unwrap();
        println!(
            "writer {seed}: slant {:+.1} deg, stroke {:.1} px, profile {:?} -> {path}",
            style.slant,
            style.stroke_width,
            style.ambiguity_profile.values().collect::<Vec<_>>()
        );
    }

    // force a merged pair: 'o' and '0' become indistinguishable
    let mut style = generate_writer_style(9);
    style
        .ambiguity_profile
        .insert(('o', '0'), AmbiguityChoice::MergedFirst);
    let o = render_line(&style, "o", 48).unwrap();
    let zero = render_line(&style, "0", 48).unwrap();
    o.save(format!("{out}/merged_o.png")).unwrap();
    zero.save(format!("{out}/merged_0.png")).unwrap();
    println!(
        "merged writer: 'o' and '0' pixel-identical = {}",
        o.as_raw() == zero.as_raw()
    );
}
