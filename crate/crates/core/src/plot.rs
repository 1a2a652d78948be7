//! PNG rendering of bar charts, heatmaps, line plots and word clouds.

use std::path::Path;
use std::sync::Once;

use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};

use crate::{Error, Result};

const FONT: &str = "sans-serif";
static FONT_BYTES: &[u8] = include_bytes!("../assets/DejaVuSans.ttf");
static REGISTER: Once = Once::new();

fn ensure_font() {
    REGISTER.call_once(|| {
        if plotters::style::register_font(FONT, FontStyle::Normal, FONT_BYTES).is_err() {
            log::warn!("bundled font failed to load; plot text may be missing");
        }
    });
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn palette(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 10] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
        RGBColor(227, 119, 194),
        RGBColor(127, 127, 127),
        RGBColor(188, 189, 34),
        RGBColor(23, 190, 207),
    ];
    COLORS[i % COLORS.len()]
}

pub struct Series {
    /// Legend text; an unnamed series is drawn as a grey reference line.
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Horizontal bars, first label at the top, with the value printed at each bar's end.
pub fn bar_chart(path: &Path, title: &str, labels: &[String], values: &[f64], x_desc: &str) -> Result<()> {
    ensure_font();
    let n = labels.len();
    let height = 140 + 44 * n as u32;
    let root = BitMapBackend::new(path, (900, height)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let x_max = values.iter().copied().fold(1.0f64, f64::max) * 1.12;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (FONT, 24))
        .margin(16)
        .x_label_area_size(50)
        .y_label_area_size(190)
        .build_cartesian_2d(0f64..x_max, 0f64..n as f64)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_y_mesh()
        .y_labels(0)
        .x_desc(x_desc)
        .label_style((FONT, 14))
        .draw()
        .map_err(plot_err)?;
    // Row i occupies [n - i - 1, n - i] so the first label sits at the top.
    let row = |i: usize| (n - i - 1) as f64;
    chart
        .draw_series(values.iter().enumerate().map(|(i, v)| {
            Rectangle::new([(0.0, row(i) + 0.15), (*v, row(i) + 0.85)], palette(i).filled())
        }))
        .map_err(plot_err)?;
    chart
        .draw_series(values.iter().enumerate().map(|(i, v)| {
            Text::new(
                format!(" {v:.3}"),
                (*v, row(i) + 0.5),
                TextStyle::from((FONT, 14).into_font()).pos(Pos::new(HPos::Left, VPos::Center)),
            )
        }))
        .map_err(plot_err)?;
    let style = TextStyle::from((FONT, 15).into_font()).pos(Pos::new(HPos::Right, VPos::Center));
    for (i, label) in labels.iter().enumerate() {
        let (px, py) = chart.backend_coord(&(0.0, row(i) + 0.5));
        root.draw(&Text::new(label.clone(), (px - 8, py), style.clone())).map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// Annotated integer heatmap; `rows[i][j]` is drawn at row `i` (top to bottom),
/// column `j`. Long column labels are replaced by numbers keyed to the row labels.
pub fn heatmap(
    path: &Path,
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    rows: &[Vec<u64>],
    x_desc: &str,
    y_desc: &str,
) -> Result<()> {
    ensure_font();
    let (n_rows, n_cols) = (row_labels.len(), col_labels.len());
    let numbered = col_labels.iter().any(|l| l.chars().count() > 9);
    let (row_text, col_text): (Vec<String>, Vec<String>) = if numbered {
        (
            row_labels.iter().enumerate().map(|(i, l)| format!("{} {l}", i + 1)).collect(),
            (1..=n_cols).map(|j| j.to_string()).collect(),
        )
    } else {
        (row_labels.to_vec(), col_labels.to_vec())
    };
    let root = BitMapBackend::new(path, (900, 160 + 64 * n_rows.max(4) as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let max = rows.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (FONT, 24))
        .margin(16)
        .x_label_area_size(56)
        .y_label_area_size(210)
        .build_cartesian_2d(0f64..n_cols as f64, 0f64..n_rows as f64)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_labels(0)
        .y_labels(0)
        .draw()
        .map_err(plot_err)?;
    let top = |i: usize| (n_rows - i) as f64;
    let cells: Vec<(usize, usize, u64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (i, j, *v)))
        .collect();
    chart
        .draw_series(cells.iter().map(|&(i, j, v)| {
            let c = (255.0 * (0.15 + 0.85 * (1.0 - v as f64 / max))) as u8;
            Rectangle::new([(j as f64, top(i)), (j as f64 + 1.0, top(i) - 1.0)], RGBColor(c, c, 255).filled())
        }))
        .map_err(plot_err)?;
    chart
        .draw_series(cells.iter().map(|&(i, j, v)| {
            let color: &'static RGBColor = if (v as f64) > max * 0.6 { &WHITE } else { &BLACK };
            Text::new(
                v.to_string(),
                (j as f64 + 0.5, top(i) - 0.5),
                TextStyle::from((FONT, 16).into_font())
                    .color(color)
                    .pos(Pos::new(HPos::Center, VPos::Center)),
            )
        }))
        .map_err(plot_err)?;
    let right = TextStyle::from((FONT, 15).into_font()).pos(Pos::new(HPos::Right, VPos::Center));
    for (i, label) in row_text.iter().enumerate() {
        let (px, py) = chart.backend_coord(&(0.0, top(i) - 0.5));
        root.draw(&Text::new(label.clone(), (px - 8, py), right.clone())).map_err(plot_err)?;
    }
    let below = TextStyle::from((FONT, 15).into_font()).pos(Pos::new(HPos::Center, VPos::Top));
    for (j, label) in col_text.iter().enumerate() {
        let (px, py) = chart.backend_coord(&(j as f64 + 0.5, 0.0));
        root.draw(&Text::new(label.clone(), (px, py + 8), below.clone())).map_err(plot_err)?;
    }
    if !(x_desc.is_empty() && y_desc.is_empty()) {
        // Corner key: row axis on the left, column axis on the right.
        let (left, bottom) = chart.backend_coord(&(0.0, 0.0));
        let corner = TextStyle::from((FONT, 14).into_font()).pos(Pos::new(HPos::Right, VPos::Top));
        root.draw(&Text::new(format!("{y_desc} \\ {x_desc}"), (left - 8, bottom + 8), corner))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// Line plot of several series; the axis ranges cover every point.
pub fn line_chart(path: &Path, title: &str, series: &[Series], x_desc: &str, y_desc: &str) -> Result<()> {
    ensure_font();
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all() {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        return Err(Error::Plot("no points to plot".into()));
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).abs().max(1e-3);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let root = BitMapBackend::new(path, (900, 620)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, (FONT, 24))
        .margin(16)
        .x_label_area_size(50)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .label_style((FONT, 14))
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        if s.name.is_empty() {
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), RGBColor(170, 170, 170).stroke_width(1)))
                .map_err(plot_err)?;
            continue;
        }
        let color = palette(i);
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .label_font((FONT, 13))
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Frequency-scaled words packed left to right, largest first.
pub fn word_cloud(path: &Path, title: &str, words: &[(String, u64)]) -> Result<()> {
    ensure_font();
    let (w, h) = (1000i32, 640i32);
    let root = BitMapBackend::new(path, (w as u32, h as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    root.draw(&Text::new(title.to_string(), (20, 12), (FONT, 24).into_font()))
        .map_err(plot_err)?;
    if words.is_empty() {
        root.draw(&Text::new("no misclassified samples", (20, 60), (FONT, 20).into_font().color(&RGBColor(120, 120, 120))))
            .map_err(plot_err)?;
        return root.present().map_err(plot_err);
    }
    let max = words.iter().map(|(_, c)| *c).max().unwrap_or(1) as f64;
    let (mut x, mut y, mut line_h) = (20i32, 56i32, 0i32);
    for (i, (word, count)) in words.iter().enumerate() {
        let size = 12.0 + 48.0 * (*count as f64 / max).sqrt();
        let font = (FONT, size).into_font().color(&palette(i));
        let (tw, th) = root.estimate_text_size(word, &font).map_err(plot_err)?;
        let (tw, th) = (tw as i32, th as i32);
        if x + tw > w - 20 {
            x = 20;
            y += line_h + 8;
            line_h = 0;
        }
        if y + th > h - 10 {
            break;
        }
        root.draw(&Text::new(word.clone(), (x, y), font)).map_err(plot_err)?;
        x += tw + 14;
        line_h = line_h.max(th);
    }
    root.present().map_err(plot_err)
}
