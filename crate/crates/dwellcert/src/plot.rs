//! Minimal self-contained SVG line plots for trace inspection. Plots are
//! convenience artifacts; assertions in tests work on rates and bounds, not
//! on pictures.

use crate::sim::Trace;

const W: f64 = 860.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 30.0;
const MB: f64 = 50.0;

/// Renders `ln`-scaled norm (and Lyapunov, when present) series against time.
pub fn trace_svg(trace: &Trace, title: &str) -> String {
    let t0 = *trace.times.first().unwrap_or(&0.0);
    let t1 = *trace.times.last().unwrap_or(&1.0);
    let mut series: Vec<(&str, &str, Vec<(f64, f64)>)> = Vec::new();
    let logged = |vals: &[f64]| -> Vec<(f64, f64)> {
        trace
            .times
            .iter()
            .zip(vals)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&t, &v)| (t, v.ln() / std::f64::consts::LN_10))
            .collect()
    };
    let l2_pts = logged(&trace.l2);
    series.push(("#1f6fb2", "log10 |w|", l2_pts));
    if let Some(lyap) = &trace.lyap {
        series.push(("#c05020", "log10 V", logged(lyap)));
    }

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, _, pts) in &series {
        for &(_, y) in pts {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = -1.0;
        y_max = 1.0;
    }
    if y_max - y_min < 1e-9 {
        y_max += 0.5;
        y_min -= 0.5;
    }

    let sx = |t: f64| ML + (t - t0) / (t1 - t0).max(1e-300) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        ML,
        xml_escape(title)
    ));
    // Axes and ticks.
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    for k in 0..=6 {
        let t = t0 + (t1 - t0) * k as f64 / 6.0;
        let x = sx(t);
        s.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{t:.2}</text>\n",
            H - MB + 18.0
        ));
    }
    for k in 0..=5 {
        let y = y_min + (y_max - y_min) * k as f64 / 5.0;
        let yy = sy(y);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yy:.1}\" x2=\"{ML}\" y2=\"{yy:.1}\" stroke=\"black\"/>\n",
            ML - 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{y:.2}</text>\n",
            ML - 8.0,
            yy + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
          text-anchor=\"middle\">t</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    ));

    for (i, (color, label, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts
            .iter()
            .map(|&(t, y)| format!("{:.2},{:.2}", sx(t), sy(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = MT + 16.0 * i as f64;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" \
             stroke-width=\"3\"/>\n",
            W - MR - 150.0,
            W - MR - 120.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            W - MR - 112.0,
            ly + 4.0,
            xml_escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
