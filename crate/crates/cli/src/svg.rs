//! Hand-emitted SVG figures on a fixed 800×600 canvas. Output bytes depend
//! only on the inputs.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const LEFT: f64 = 90.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 80.0;

const INK: &str = "#222222";
const GRID: &str = "#dddddd";
pub const BLUE: &str = "#1f77b4";
pub const ORANGE: &str = "#ff7f0e";
pub const GREY: &str = "#7f7f7f";
pub const RED: &str = "#d62728";

fn n(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut c = Canvas {
            body: String::new(),
        };
        c.rect(0.0, 0.0, WIDTH, HEIGHT, "#ffffff", None);
        c.text(WIDTH / 2.0, 32.0, "middle", 18.0, title);
        c
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dashed: bool) {
        let dash = if dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"{dash}/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2),
            n(width)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke = stroke.map_or(String::new(), |s| format!(r#" stroke="{s}""#));
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"{stroke}/>"#,
            n(x),
            n(y),
            n(w.max(0.0)),
            n(h.max(0.0))
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}" fill-opacity="0.7"/>"#,
            n(x),
            n(y),
            n(r)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="{}" fill="{INK}">{}</text>"#,
            n(x),
            n(y),
            n(size),
            esc(s)
        );
    }

    fn vtext(&mut self, x: f64, y: f64, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="{}" fill="{INK}" transform="rotate(-90 {} {})">{}</text>"#,
            n(x),
            n(y),
            n(size),
            n(x),
            n(y),
            esc(s)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = WIDTH as u32,
            h = HEIGHT as u32
        )
    }
}

#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// Round step of 1, 2 or 5 × 10^k giving about `target` intervals.
fn nice_step(range: f64, target: f64) -> f64 {
    let raw = range / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Padded data range snapped outwards to tick multiples.
fn padded(lo: f64, hi: f64) -> (f64, f64, f64) {
    let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    };
    let pad = 0.04 * (hi - lo);
    let step = nice_step(hi - lo + 2.0 * pad, 6.0);
    (
        (((lo - pad) / step).floor()) * step,
        (((hi + pad) / step).ceil()) * step,
        step,
    )
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

struct Frame {
    x: Scale,
    y: Scale,
}

impl Frame {
    fn new(
        c: &mut Canvas,
        (xlo, xhi): (f64, f64),
        (ylo, yhi): (f64, f64),
        xlabel: &str,
        ylabel: &str,
    ) -> Self {
        let (xlo, xhi, xstep) = padded(xlo, xhi);
        let (ylo, yhi, ystep) = padded(ylo, yhi);
        let x = Scale {
            lo: xlo,
            hi: xhi,
            px_lo: LEFT,
            px_hi: WIDTH - RIGHT,
        };
        let y = Scale {
            lo: ylo,
            hi: yhi,
            px_lo: HEIGHT - BOTTOM,
            px_hi: TOP,
        };
        let nx = ((xhi - xlo) / xstep).round() as i64;
        for i in 0..=nx {
            let v = xlo + i as f64 * xstep;
            let px = x.map(v);
            c.line(px, TOP, px, HEIGHT - BOTTOM, GRID, 1.0, false);
            c.text(
                px,
                HEIGHT - BOTTOM + 20.0,
                "middle",
                12.0,
                &tick_label(v, xstep),
            );
        }
        let ny = ((yhi - ylo) / ystep).round() as i64;
        for i in 0..=ny {
            let v = ylo + i as f64 * ystep;
            let py = y.map(v);
            c.line(LEFT, py, WIDTH - RIGHT, py, GRID, 1.0, false);
            c.text(LEFT - 8.0, py + 4.0, "end", 12.0, &tick_label(v, ystep));
        }
        axes_box(c);
        c.text(
            (LEFT + WIDTH - RIGHT) / 2.0,
            HEIGHT - 30.0,
            "middle",
            14.0,
            xlabel,
        );
        c.vtext(28.0, (TOP + HEIGHT - BOTTOM) / 2.0, 14.0, ylabel);
        Frame { x, y }
    }

    /// Line clipped to the plotting area along its parameter.
    fn segment(&self, c: &mut Canvas, a: (f64, f64), b: (f64, f64), colour: &str, dashed: bool) {
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let d = (b.0 - a.0, b.1 - a.1);
        for (p, dp, lo, hi) in [
            (a.0, d.0, self.x.lo, self.x.hi),
            (a.1, d.1, self.y.lo, self.y.hi),
        ] {
            if dp.abs() < 1e-15 {
                if p < lo || p > hi {
                    return;
                }
                continue;
            }
            let (mut s0, mut s1) = ((lo - p) / dp, (hi - p) / dp);
            if s0 > s1 {
                std::mem::swap(&mut s0, &mut s1);
            }
            t0 = t0.max(s0);
            t1 = t1.min(s1);
        }
        if t0 > t1 {
            return;
        }
        let at = |t: f64| (a.0 + t * d.0, a.1 + t * d.1);
        let (p, q) = (at(t0), at(t1));
        c.line(
            self.x.map(p.0),
            self.y.map(p.1),
            self.x.map(q.0),
            self.y.map(q.1),
            colour,
            2.0,
            dashed,
        );
    }
}

fn axes_box(c: &mut Canvas) {
    c.rect(
        LEFT,
        TOP,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM,
        "none",
        Some(INK),
    );
}

fn legend(c: &mut Canvas, items: &[(&str, &str)]) {
    for (i, (label, colour)) in items.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        c.rect(WIDTH - RIGHT - 170.0, y - 10.0, 12.0, 12.0, colour, None);
        c.text(WIDTH - RIGHT - 152.0, y, "start", 12.0, label);
    }
}

/// Bar chart over labelled bins.
pub fn histogram(title: &str, xlabel: &str, bins: &[(String, u64)]) -> String {
    let mut c = Canvas::new(title);
    let max = bins.iter().map(|b| b.1).max().unwrap_or(0) as f64;
    let (ylo, yhi, ystep) = padded(0.0, max.max(1.0));
    let y = Scale {
        lo: ylo.max(0.0),
        hi: yhi,
        px_lo: HEIGHT - BOTTOM,
        px_hi: TOP,
    };
    let ny = ((yhi - y.lo) / ystep).round() as i64;
    for i in 0..=ny {
        let v = y.lo + i as f64 * ystep;
        c.line(LEFT, y.map(v), WIDTH - RIGHT, y.map(v), GRID, 1.0, false);
        c.text(
            LEFT - 8.0,
            y.map(v) + 4.0,
            "end",
            12.0,
            &tick_label(v, ystep),
        );
    }
    let width = (WIDTH - LEFT - RIGHT) / bins.len().max(1) as f64;
    let every = (bins.len() / 20).max(1);
    for (i, (label, count)) in bins.iter().enumerate() {
        let x = LEFT + i as f64 * width;
        let top = y.map(*count as f64);
        c.rect(x + 1.0, top, width - 2.0, HEIGHT - BOTTOM - top, BLUE, None);
        if i % every == 0 {
            c.text(
                x + width / 2.0,
                HEIGHT - BOTTOM + 20.0,
                "middle",
                12.0,
                label,
            );
        }
    }
    axes_box(&mut c);
    c.text(
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 30.0,
        "middle",
        14.0,
        xlabel,
    );
    c.vtext(28.0, (TOP + HEIGHT - BOTTOM) / 2.0, 14.0, "count");
    c.finish()
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
    pub colour: &'a str,
}

pub struct RefLine<'a> {
    pub label: &'a str,
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub colour: &'a str,
    pub dashed: bool,
}

/// Scatter plot with optional reference lines (clipped to the data range).
pub fn scatter(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    lines: &[RefLine],
) -> String {
    let mut c = Canvas::new(title);
    let pts = series.iter().flat_map(|s| s.points.iter().copied());
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    // Horizontal reference lines must stay visible.
    for l in lines
        .iter()
        .filter(|l| l.from.1 == l.to.1 && l.from.1.is_finite())
    {
        ylo = ylo.min(l.from.1);
        yhi = yhi.max(l.from.1);
    }
    let f = Frame::new(&mut c, (xlo, xhi), (ylo, yhi), xlabel, ylabel);
    for l in lines {
        f.segment(&mut c, l.from, l.to, l.colour, l.dashed);
    }
    for s in series {
        for &(x, y) in s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
        {
            c.circle(f.x.map(x), f.y.map(y), 4.0, s.colour);
        }
    }
    let mut items: Vec<(&str, &str)> = series.iter().map(|s| (s.label, s.colour)).collect();
    items.extend(
        lines
            .iter()
            .filter(|l| !l.label.is_empty())
            .map(|l| (l.label, l.colour)),
    );
    legend(&mut c, &items);
    c.finish()
}

/// Grid of values in [0, 1]; `None` cells are drawn grey with "NA".
pub fn heatmap(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    labels: &[&str],
    values: &[Vec<Option<f64>>],
) -> String {
    let mut c = Canvas::new(title);
    let k = labels.len().max(1) as f64;
    let side = (WIDTH - LEFT - RIGHT).min(HEIGHT - TOP - BOTTOM);
    let cell = side / k;
    let x0 = LEFT + (WIDTH - LEFT - RIGHT - side) / 2.0;
    for (r, row) in values.iter().enumerate() {
        for (col, v) in row.iter().enumerate() {
            let (x, y) = (x0 + col as f64 * cell, TOP + r as f64 * cell);
            let (fill, text) = match v {
                Some(v) => {
                    let v = v.clamp(0.0, 1.0);
                    let shade = |full: f64| (255.0 - v * (255.0 - full)).round() as u8;
                    (
                        format!(
                            "#{:02x}{:02x}{:02x}",
                            shade(31.0),
                            shade(119.0),
                            shade(180.0)
                        ),
                        format!("{v:.2}"),
                    )
                }
                None => ("#eeeeee".to_string(), "NA".to_string()),
            };
            c.rect(x, y, cell, cell, &fill, Some(INK));
            c.text(x + cell / 2.0, y + cell / 2.0 + 6.0, "middle", 18.0, &text);
        }
    }
    for (i, l) in labels.iter().enumerate() {
        c.text(
            x0 + (i as f64 + 0.5) * cell,
            TOP + side + 20.0,
            "middle",
            13.0,
            l,
        );
        c.text(
            x0 - 8.0,
            TOP + (i as f64 + 0.5) * cell + 4.0,
            "end",
            13.0,
            l,
        );
    }
    c.text(x0 + side / 2.0, HEIGHT - 30.0, "middle", 14.0, xlabel);
    c.vtext(28.0, TOP + side / 2.0, 14.0, ylabel);
    c.finish()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box plot per group: quartile box, median, whiskers to the most extreme
/// points within 1.5 IQR, outliers as dots.
pub fn box_plot(title: &str, xlabel: &str, ylabel: &str, groups: &[(String, Vec<f64>)]) -> String {
    let mut c = Canvas::new(title);
    let all = groups
        .iter()
        .flat_map(|g| g.1.iter().copied())
        .filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (ylo, yhi, ystep) = padded(lo, hi);
    let y = Scale {
        lo: ylo,
        hi: yhi,
        px_lo: HEIGHT - BOTTOM,
        px_hi: TOP,
    };
    let ny = ((yhi - ylo) / ystep).round() as i64;
    for i in 0..=ny {
        let v = ylo + i as f64 * ystep;
        c.line(LEFT, y.map(v), WIDTH - RIGHT, y.map(v), GRID, 1.0, false);
        c.text(
            LEFT - 8.0,
            y.map(v) + 4.0,
            "end",
            12.0,
            &tick_label(v, ystep),
        );
    }
    let slot = (WIDTH - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (i, (label, values)) in groups.iter().enumerate() {
        let cx = LEFT + (i as f64 + 0.5) * slot;
        let half = (slot * 0.25).min(60.0);
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        c.text(
            cx,
            HEIGHT - BOTTOM + 20.0,
            "middle",
            12.0,
            &format!("{label} (n={})", v.len()),
        );
        if v.is_empty() {
            continue;
        }
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let lo_w = v
            .iter()
            .copied()
            .find(|&x| x >= q1 - 1.5 * iqr)
            .unwrap_or(q1);
        let hi_w = v
            .iter()
            .rev()
            .copied()
            .find(|&x| x <= q3 + 1.5 * iqr)
            .unwrap_or(q3);
        c.line(cx, y.map(lo_w), cx, y.map(q1), INK, 1.5, false);
        c.line(cx, y.map(q3), cx, y.map(hi_w), INK, 1.5, false);
        c.line(
            cx - half / 2.0,
            y.map(lo_w),
            cx + half / 2.0,
            y.map(lo_w),
            INK,
            1.5,
            false,
        );
        c.line(
            cx - half / 2.0,
            y.map(hi_w),
            cx + half / 2.0,
            y.map(hi_w),
            INK,
            1.5,
            false,
        );
        c.rect(
            cx - half,
            y.map(q3),
            2.0 * half,
            y.map(q1) - y.map(q3),
            "#c6dbef",
            Some(INK),
        );
        c.line(
            cx - half,
            y.map(med),
            cx + half,
            y.map(med),
            RED,
            2.5,
            false,
        );
        for &x in v.iter().filter(|&&x| x < lo_w || x > hi_w) {
            c.circle(cx, y.map(x), 3.0, GREY);
        }
    }
    axes_box(&mut c);
    c.text(
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 30.0,
        "middle",
        14.0,
        xlabel,
    );
    c.vtext(28.0, (TOP + HEIGHT - BOTTOM) / 2.0, 14.0, ylabel);
    c.finish()
}
