//! CSV and SVG renderings of topic-level figures. Output is plain text with
//! fixed decimal widths so identical inputs give identical bytes.

use std::fmt::Write as _;

use ndarray::ArrayView2;

use super::hierarchy::Dendrogram;
use super::intertopic::IntertopicMap;
use crate::scalar::Scalar;

pub fn heatmap_csv<T: Scalar>(sim: ArrayView2<T>) -> String {
    let n = sim.nrows();
    let mut s = String::from("topic");
    for j in 0..n {
        write!(s, ",{j}").unwrap();
    }
    s.push('\n');
    for i in 0..n {
        write!(s, "{i}").unwrap();
        for j in 0..n {
            write!(s, ",{:.6}", sim[[i, j]].as_f64()).unwrap();
        }
        s.push('\n');
    }
    s
}

const RAMP: [&str; 8] = [
    "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#084594",
];

fn ramp(v: f64) -> &'static str {
    let i = ((v.clamp(0.0, 1.0)) * (RAMP.len() as f64 - 1e-9)).floor() as usize;
    RAMP[i.min(RAMP.len() - 1)]
}

pub fn heatmap_svg<T: Scalar>(sim: ArrayView2<T>) -> String {
    let n = sim.nrows();
    let cell = 40;
    let margin = 40;
    let size = margin + cell * n;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for i in 0..n {
        let p = margin + cell * i + cell / 2;
        writeln!(s, "<text x=\"{p}\" y=\"{}\" text-anchor=\"middle\">{i}</text>", margin - 8).unwrap();
        writeln!(s, "<text x=\"{}\" y=\"{p}\" text-anchor=\"end\" dominant-baseline=\"middle\">{i}</text>", margin - 8).unwrap();
    }
    for i in 0..n {
        for j in 0..n {
            let v = sim[[i, j]].as_f64();
            let (x, y) = (margin + cell * j, margin + cell * i);
            writeln!(s, "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\"/>", ramp(v)).unwrap();
            let ink = if v > 0.6 { "#ffffff" } else { "#000000" };
            writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" dominant-baseline=\"middle\" fill=\"{ink}\">{v:.2}</text>",
                x + cell / 2,
                y + cell / 2
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn dendrogram_svg(d: &Dendrogram) -> String {
    let order = d.leaf_order();
    let n = d.n_topics;
    let (w, h, margin) = (40.0 * n.max(1) as f64 + 40.0, 300.0, 30.0);
    let max_h = d.merges.iter().map(|m| m.height).fold(0.0, f64::max).max(1e-9);
    let y_of = |height: f64| h - margin - (h - 2.0 * margin) * height / max_h;
    let mut x = vec![0.0; n + d.merges.len()];
    let mut y = vec![h - margin; n + d.merges.len()];
    for (pos, &leaf) in order.iter().enumerate() {
        x[leaf] = margin + 40.0 * pos as f64;
    }
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for &leaf in &order {
        writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{leaf}</text>", x[leaf], h - margin + 14.0).unwrap();
    }
    for (i, m) in d.merges.iter().enumerate() {
        let id = n + i;
        let top = y_of(m.height);
        x[id] = 0.5 * (x[m.left] + x[m.right]);
        y[id] = top;
        writeln!(
            s,
            "<path d=\"M{:.1},{:.1} V{top:.1} H{:.1} V{:.1}\" fill=\"none\" stroke=\"#333\"/>",
            x[m.left], y[m.left], x[m.right], y[m.right]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn intertopic_csv(map: &IntertopicMap) -> String {
    let mut s = String::from("topic,x,y,prevalence\n");
    for (k, (c, p)) in map.coords.iter().zip(&map.prevalence).enumerate() {
        writeln!(s, "{k},{:.6},{:.6},{p:.6}", c[0], c[1]).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::represent::dendrogram;
    use ndarray::array;

    #[test]
    fn heatmap_layout() {
        let m = array![[1.0, 0.25], [0.25, 1.0]];
        assert_eq!(heatmap_csv(m.view()), "topic,0,1\n0,1.000000,0.250000\n1,0.250000,1.000000\n");
        let svg = heatmap_svg(m.view());
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains(">0.25<"));
    }

    #[test]
    fn dendrogram_draws_every_merge() {
        let d = dendrogram(array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]].view());
        assert_eq!(dendrogram_svg(&d).matches("<path").count(), 2);
    }

    #[test]
    fn intertopic_rows() {
        let map = IntertopicMap { coords: vec![[0.5, -0.25]], prevalence: vec![1.0], degenerate: true };
        assert_eq!(intertopic_csv(&map), "topic,x,y,prevalence\n0,0.500000,-0.250000,1.000000\n");
    }
}
