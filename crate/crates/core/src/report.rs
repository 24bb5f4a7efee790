//! Cross-class heatmaps of top words.
//!
//! Columns are words that appear in the top lists of at least half of the
//! classes (`⌈k/2⌉` of `k`), rows are classes, and a cell shows the word's
//! P/N label in that class.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};
use core::str::FromStr;

use crate::aggregate::{Label, RankedWordList, MAX_LABELS};
use crate::corpus::Dimension;
use crate::{Error, Result};

/// Minimum number of class lists a word must appear in: `⌈0.5 · classes⌉`.
pub fn column_threshold(classes: usize) -> usize {
    classes.div_ceil(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    pub dimension: String,
    /// Class ids in dimension order.
    pub rows: Vec<String>,
    /// By number of lists containing the word (descending), then by word.
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Option<Label>>>,
}

impl HeatmapSpec {
    /// Labelled cells as `(class, word, label)`, row-major.
    pub fn labelled_cells(&self) -> Vec<(&str, &str, Label)> {
        let mut out = Vec::new();
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            for (word, cell) in self.columns.iter().zip(cells) {
                if let Some(label) = cell {
                    out.push((row.as_str(), word.as_str(), *label));
                }
            }
        }
        out
    }
}

/// Filters the per-class lists down to the heatmap columns.
pub fn build_heatmap(dimension: &Dimension, lists: &[RankedWordList]) -> Result<HeatmapSpec> {
    let mut by_class: BTreeMap<usize, &RankedWordList> = BTreeMap::new();
    for list in lists {
        let i = dimension.index_of(&list.class)?;
        if by_class.insert(i, list).is_some() {
            return Err(Error::InvalidArgument(format!(
                "two ranked lists for class `{}`",
                list.class
            )));
        }
    }
    if let Some(missing) = dimension
        .classes()
        .iter()
        .enumerate()
        .find(|(i, _)| !by_class.contains_key(i))
    {
        return Err(Error::InvalidArgument(format!(
            "no ranked list for class `{}`",
            missing.1
        )));
    }

    let mut coverage: BTreeMap<&str, usize> = BTreeMap::new();
    for list in by_class.values() {
        let mut seen: Vec<&str> = list.entries.iter().map(|e| e.word.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *coverage.entry(w).or_default() += 1;
        }
    }
    let threshold = column_threshold(dimension.len());
    let mut columns: Vec<(&str, usize)> = coverage
        .into_iter()
        .filter(|&(_, n)| n >= threshold)
        .collect();
    columns.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let columns: Vec<String> = columns.into_iter().map(|(w, _)| w.to_string()).collect();

    let cells = by_class
        .values()
        .map(|list| columns.iter().map(|w| list.label_of(w)).collect())
        .collect();
    Ok(HeatmapSpec {
        dimension: dimension.name().to_string(),
        rows: dimension.classes().to_vec(),
        columns,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    /// WCAG relative luminance in `[0, 1]`.
    pub fn luminance(self) -> f64 {
        fn channel(c: u8) -> f64 {
            let c = c as f64 / 255.0;
            if c <= 0.04045 {
                c / 12.92
            } else {
                libm::pow((c + 0.055) / 1.055, 2.4)
            }
        }
        0.2126 * channel(self.0) + 0.7152 * channel(self.1) + 0.0722 * channel(self.2)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

impl FromStr for Rgb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid color `{s}`, expected #rrggbb"));
        let hex = s.strip_prefix('#').ok_or_else(bad)?;
        if hex.len() != 6 || !hex.is_ascii() {
            return Err(bad());
        }
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad());
        Ok(Rgb(byte(0)?, byte(2)?, byte(4)?))
    }
}

const STEPS: usize = MAX_LABELS as usize;

/// Ten-step ramps: index 0 colors P1/N1 (darkest), index 9 colors P10/N10.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub positive: [Rgb; STEPS],
    pub negative: [Rgb; STEPS],
}

impl Default for Palette {
    /// Linear sRGB ramps: green #00441b → #c7e9c0, orange #7f2704 → #fdd0a2.
    fn default() -> Self {
        Palette {
            positive: [
                Rgb(0x00, 0x44, 0x1b),
                Rgb(0x16, 0x56, 0x2d),
                Rgb(0x2c, 0x69, 0x40),
                Rgb(0x42, 0x7b, 0x52),
                Rgb(0x58, 0x8d, 0x64),
                Rgb(0x6f, 0xa0, 0x77),
                Rgb(0x85, 0xb2, 0x89),
                Rgb(0x9b, 0xc4, 0x9b),
                Rgb(0xb1, 0xd7, 0xae),
                Rgb(0xc7, 0xe9, 0xc0),
            ],
            negative: [
                Rgb(0x7f, 0x27, 0x04),
                Rgb(0x8d, 0x3a, 0x16),
                Rgb(0x9b, 0x4d, 0x27),
                Rgb(0xa9, 0x5f, 0x39),
                Rgb(0xb7, 0x72, 0x4a),
                Rgb(0xc5, 0x85, 0x5c),
                Rgb(0xd3, 0x98, 0x6d),
                Rgb(0xe1, 0xaa, 0x7f),
                Rgb(0xef, 0xbd, 0x90),
                Rgb(0xfd, 0xd0, 0xa2),
            ],
        }
    }
}

impl Palette {
    /// Builds a palette from hex strings, ten per ramp.
    pub fn from_hex<S: AsRef<str>>(positive: &[S], negative: &[S]) -> Result<Self> {
        fn ramp<S: AsRef<str>>(colors: &[S]) -> Result<[Rgb; STEPS]> {
            if colors.len() != STEPS {
                return Err(Error::InvalidArgument(format!(
                    "a palette ramp needs {STEPS} colors, got {}",
                    colors.len()
                )));
            }
            let mut out = [Rgb(0, 0, 0); STEPS];
            for (slot, c) in out.iter_mut().zip(colors) {
                *slot = c.as_ref().parse()?;
            }
            Ok(out)
        }
        Ok(Palette {
            positive: ramp(positive)?,
            negative: ramp(negative)?,
        })
    }

    pub fn color(&self, label: Label) -> Rgb {
        let i = usize::from(label.rank().clamp(1, MAX_LABELS)) - 1;
        match label {
            Label::Positive(_) => self.positive[i],
            Label::Negative(_) => self.negative[i],
        }
    }
}

const CELL_W: usize = 44;
const CELL_H: usize = 24;
const LEFT: usize = 90;
const TOP: usize = 110;
const PAD: usize = 10;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders the heatmap as an SVG 1.1 document. Output bytes depend only on
/// the spec and the palette.
pub fn render_svg(spec: &HeatmapSpec, palette: &Palette) -> String {
    let width = LEFT + CELL_W * spec.columns.len() + PAD;
    let height = TOP + CELL_H * spec.rows.len() + PAD;
    let mut svg = String::new();
    // Writing into a String cannot fail.
    let _ = write_svg(&mut svg, spec, palette, width, height);
    svg
}

fn write_svg(
    svg: &mut String,
    spec: &HeatmapSpec,
    palette: &Palette,
    width: usize,
    height: usize,
) -> fmt::Result {
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(svg, "<title>{}</title>", escape(&spec.dimension))?;
    writeln!(
        svg,
        r##"<rect class="background" x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##
    )?;

    // Axes.
    let grid_right = LEFT + CELL_W * spec.columns.len();
    let grid_bottom = TOP + CELL_H * spec.rows.len();
    writeln!(
        svg,
        r##"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{grid_bottom}" stroke="#000000"/>"##
    )?;
    writeln!(
        svg,
        r##"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{grid_right}" y2="{TOP}" stroke="#000000"/>"##
    )?;

    writeln!(svg, r#"<g class="rows" font-family="sans-serif" font-size="12" text-anchor="end">"#)?;
    for (r, class) in spec.rows.iter().enumerate() {
        let y = TOP + CELL_H * r + CELL_H / 2 + 4;
        writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, LEFT - 6, escape(class))?;
    }
    writeln!(svg, "</g>")?;

    writeln!(svg, r#"<g class="columns" font-family="sans-serif" font-size="12">"#)?;
    for (c, word) in spec.columns.iter().enumerate() {
        let x = LEFT + CELL_W * c + CELL_W / 2;
        let y = TOP - 6;
        writeln!(
            svg,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(word)
        )?;
    }
    writeln!(svg, "</g>")?;

    writeln!(
        svg,
        r#"<g class="cells" font-family="sans-serif" font-size="10" text-anchor="middle">"#
    )?;
    for (r, (class, row)) in spec.rows.iter().zip(&spec.cells).enumerate() {
        for (c, (word, cell)) in spec.columns.iter().zip(row).enumerate() {
            let Some(label) = cell else { continue };
            let x = LEFT + CELL_W * c;
            let y = TOP + CELL_H * r;
            let fill = palette.color(*label);
            let ink = if fill.luminance() < 0.3 { "#ffffff" } else { "#000000" };
            writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" data-class="{}" data-word="{}" data-label="{label}"/>"#,
                escape(class),
                escape(word)
            )?;
            writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{ink}">{label}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            )?;
        }
    }
    writeln!(svg, "</g>")?;
    writeln!(svg, "</svg>")
}
