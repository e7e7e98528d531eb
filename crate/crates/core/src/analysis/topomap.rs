use std::fmt::Write as _;

use super::SaliencyMap;
use crate::error::{Error, Result};
use crate::graph::ElectrodeLayout;

const SIZE: f64 = 420.0;
const HEAD_R: f64 = 160.0;
const CENTER: (f64, f64) = (200.0, 210.0);
const MARKER_R: f64 = 13.0;

/// Light-to-dark sequential palette; the last stop is the saturated colour.
const PALETTE: [(f64, [u8; 3]); 3] = [(0.0, [255, 247, 236]), (0.5, [252, 141, 89]), (1.0, [179, 0, 0])];

/// Palette colour of `v` in `[0, 1]` as `#rrggbb`.
pub fn palette_color(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let k = PALETTE.windows(2).position(|w| v <= w[1].0).unwrap_or(PALETTE.len() - 2);
    let ((a, ca), (b, cb)) = (PALETTE[k], PALETTE[k + 1]);
    let f = (v - a) / (b - a);
    let mix = |i: usize| (ca[i] as f64 + f * (cb[i] as f64 - ca[i] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

/// Renders per-channel scores on a flattened scalp. Marker colour encodes
/// the score relative to the largest one.
pub fn project_topomap(map: &SaliencyMap, layout: &ElectrodeLayout) -> Result<String> {
    let sub = layout
        .subset(&map.channels)
        .map_err(|e| Error::Config(format!("topomap: {e}")))?;
    let flat = layout.project_2d();
    let coords: Vec<[f64; 2]> = map
        .channels
        .iter()
        .map(|c| flat[layout.index_of(c).expect("subset checked membership")])
        .collect();
    debug_assert_eq!(sub.len(), coords.len());
    let extent = flat
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let scale = (HEAD_R - MARKER_R) / extent;
    let max = map.scores.iter().copied().fold(0.0f64, f64::max);
    let rel = |s: f64| if max > 0.0 { s / max } else { 0.0 };

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif">"#
    );
    let (cx, cy) = CENTER;
    let _ = writeln!(w, r##"<rect width="{SIZE}" height="{SIZE}" fill="#ffffff"/>"##);
    let _ = writeln!(
        w,
        r##"<path d="M {:.2} {:.2} L {cx:.2} {:.2} L {:.2} {:.2}" fill="none" stroke="#333333" stroke-width="2"/>"##,
        cx - 14.0,
        cy - HEAD_R + 2.0,
        cy - HEAD_R - 16.0,
        cx + 14.0,
        cy - HEAD_R + 2.0
    );
    let _ = writeln!(
        w,
        r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{HEAD_R:.2}" fill="none" stroke="#333333" stroke-width="2"/>"##
    );
    for ((name, p), &s) in map.channels.iter().zip(&coords).zip(&map.scores) {
        let (x, y) = (cx + p[0] * scale, cy - p[1] * scale);
        let _ = writeln!(
            w,
            r##"<circle class="electrode" data-channel="{name}" cx="{x:.2}" cy="{y:.2}" r="{MARKER_R:.2}" fill="{}" stroke="#555555" stroke-width="0.8"/>"##,
            palette_color(rel(s))
        );
        let _ = writeln!(
            w,
            r##"<text x="{x:.2}" y="{:.2}" font-size="8" text-anchor="middle" fill="#000000">{name}</text>"##,
            y + 3.0
        );
    }
    let (lx, ly, lh) = (SIZE - 40.0, CENTER.1 - 100.0, 200.0);
    let _ = writeln!(w, r#"<defs><linearGradient id="cbar" x1="0" y1="1" x2="0" y2="0">"#);
    for (off, _) in PALETTE {
        let _ = writeln!(w, r#"<stop offset="{off:.2}" stop-color="{}"/>"#, palette_color(off));
    }
    let _ = writeln!(w, "</linearGradient></defs>");
    let _ = writeln!(
        w,
        r##"<rect x="{lx:.2}" y="{ly:.2}" width="12" height="{lh:.2}" fill="url(#cbar)" stroke="#555555" stroke-width="0.8"/>"##
    );
    let _ = writeln!(
        w,
        r##"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle" fill="#000000">{max:.3e}</text>"##,
        lx + 6.0,
        ly - 5.0
    );
    let _ = writeln!(
        w,
        r##"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle" fill="#000000">0</text>"##,
        lx + 6.0,
        ly + lh + 12.0
    );
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn map(names: &[&str], scores: Vec<f64>) -> SaliencyMap {
        let total: f64 = scores.iter().sum();
        SaliencyMap {
            channels: names.iter().map(|s| s.to_string()).collect(),
            raw: Tensor::zeros(&[names.len(), 1]),
            normalized: scores.iter().map(|s| s / total).collect(),
            scores,
            windows: 1,
        }
    }

    fn fills(svg: &str) -> Vec<String> {
        svg.lines()
            .filter(|l| l.contains(r#"class="electrode""#))
            .map(|l| {
                let i = l.find("fill=\"").unwrap() + 6;
                l[i..i + 7].to_string()
            })
            .collect()
    }

    const NAMES: [&str; 5] = ["Cz", "FC1", "FC2", "CPz", "Pz"];

    #[test]
    fn uniform_map_has_one_colour() {
        let svg = project_topomap(&map(&NAMES, vec![2.0; 5]), &ElectrodeLayout::standard_10_10()).unwrap();
        let f = fills(&svg);
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|c| *c == f[0]));
    }

    #[test]
    fn single_channel_is_the_only_saturated_marker() {
        let svg = project_topomap(&map(&NAMES, vec![0.0, 0.0, 3.0, 0.0, 0.0]), &ElectrodeLayout::standard_10_10())
            .unwrap();
        let saturated = palette_color(1.0);
        let f = fills(&svg);
        assert_eq!(f.iter().filter(|c| **c == saturated).count(), 1);
        assert_eq!(f[2], saturated);
    }

    #[test]
    fn output_is_byte_stable() {
        let m = map(&NAMES, vec![0.1, 0.5, 0.2, 0.9, 0.3]);
        let layout = ElectrodeLayout::standard_10_10();
        let a = project_topomap(&m, &layout).unwrap();
        assert_eq!(a, project_topomap(&m.clone(), &layout).unwrap());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains(">FC1</text>"));
    }

    #[test]
    fn unknown_channel_is_a_config_error() {
        let m = map(&["Cz", "XX"], vec![1.0, 1.0]);
        assert!(matches!(
            project_topomap(&m, &ElectrodeLayout::standard_10_10()),
            Err(Error::Config(_))
        ));
    }
}
