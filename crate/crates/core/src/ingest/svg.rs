//! Deterministic standalone SVG 1.1 histograms with CSV bin sidecars.
//! No rendering dependency; byte output is stable for golden-file checks.

use std::fs;
use std::path::{Path, PathBuf};

use super::IngestError;

pub const HISTOGRAM_BINS: usize = 20;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Bins {
    lo: f64,
    width: f64,
    counts: Vec<usize>,
}

fn compute_bins(values: &[f64]) -> Bins {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    // A constant column still gets a well-defined axis; every value lands
    // in the single bin containing it.
    let (lo, hi) = if min == max { (min - 0.5, max + 0.5) } else { (min, max) };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[idx] += 1;
    }
    Bins { lo, width, counts }
}

fn render_svg(title: &str, bins: &Bins, markers: &[(String, f64)]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let max_count = bins.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let hi = bins.lo + bins.width * HISTOGRAM_BINS as f64;
    let x_of = |v: f64| MARGIN_LEFT + (v - bins.lo) / (hi - bins.lo) * plot_w;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str(&format!(
        "  <title>{}</title>\n  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n",
        xml_escape(title)
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));

    for (i, &count) in bins.counts.iter().enumerate() {
        let x = MARGIN_LEFT + i as f64 / HISTOGRAM_BINS as f64 * plot_w;
        let bar_w = plot_w / HISTOGRAM_BINS as f64;
        let h = count as f64 / max_count * plot_h;
        let y = MARGIN_TOP + plot_h - h;
        s.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" \
             fill=\"#4a90d9\" stroke=\"white\" stroke-width=\"0.5\"/>\n"
        ));
    }

    // axes
    s.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    s.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{MARGIN_TOP:.2}\" x2=\"{MARGIN_LEFT:.2}\" \
         y2=\"{:.2}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));
    for frac in [0.0, 0.5, 1.0] {
        let v = bins.lo + frac * (hi - bins.lo);
        let x = x_of(v);
        s.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{v:.4}</text>\n",
            MARGIN_TOP + plot_h + 18.0
        ));
    }
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + 4.0,
        max_count as usize
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"end\">0</text>\n",
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + plot_h + 4.0
    ));

    for (label, v) in markers {
        let x = x_of(*v);
        s.push_str(&format!(
            "  <line class=\"threshold-marker\" x1=\"{x:.2}\" y1=\"{MARGIN_TOP:.2}\" \
             x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#d0342c\" stroke-width=\"1.5\" \
             stroke-dasharray=\"6 3\"/>\n",
            MARGIN_TOP + plot_h
        ));
        s.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"#d0342c\">{}</text>\n",
            x + 4.0,
            MARGIN_TOP + 12.0,
            xml_escape(label)
        ));
    }

    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bins_csv(bins: &Bins) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, &count) in bins.counts.iter().enumerate() {
        let lo = bins.lo + i as f64 * bins.width;
        let hi = bins.lo + (i + 1) as f64 * bins.width;
        out.push_str(&format!("{lo:.8},{hi:.8},{count}\n"));
    }
    out
}

fn sanitized(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_pair(
    out_dir: &Path,
    name: &str,
    values: &[f64],
    markers: &[(String, f64)],
) -> Result<PathBuf, IngestError> {
    if values.is_empty() {
        return Err(IngestError::EmptyColumn(name.to_string()));
    }
    let bins = compute_bins(values);
    let base = sanitized(name);
    let svg_path = out_dir.join(format!("{base}.svg"));
    let csv_path = out_dir.join(format!("{base}_bins.csv"));
    let io = |p: &Path, e: std::io::Error| IngestError::Io {
        path: p.display().to_string(),
        source: e,
    };
    fs::write(&svg_path, render_svg(name, &bins, markers)).map_err(|e| io(&svg_path, e))?;
    fs::write(&csv_path, bins_csv(&bins)).map_err(|e| io(&csv_path, e))?;
    Ok(svg_path)
}

/// One 20-bin SVG histogram per named column, each with a CSV sidecar of
/// bin edges and counts. Returns the SVG paths written.
pub fn export_histograms(
    columns: &[(String, Vec<f64>)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, IngestError> {
    columns
        .iter()
        .map(|(name, values)| write_pair(out_dir, name, values, &[]))
        .collect()
}

/// Histogram of a similarity distribution with dashed marker lines at the
/// mean and mean-plus-std tail thresholds.
pub fn export_similarity_histogram(
    name: &str,
    values: &[f64],
    mean: f64,
    mean_plus_std: f64,
    out_dir: &Path,
) -> Result<PathBuf, IngestError> {
    let markers = vec![
        ("mean".to_string(), mean),
        ("mean+std".to_string(), mean_plus_std),
    ];
    write_pair(out_dir, name, values, &markers)
}
