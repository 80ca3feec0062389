use std::fmt::Write;

use mesoloc_core::Mask;
use nalgebra::DMatrix;

const CELL: usize = 24;
const MARGIN: usize = 28;

pub fn nonzero_mask(mat: &DMatrix<f64>, tau: f64) -> Mask {
    Mask::from_fn(mat.nrows(), mat.ncols(), |i, j| mat[(i, j)].abs() > tau)
}

/// `#` for entries above `tau`, `.` otherwise, with a header line.
pub fn text_grid(title: &str, mat: &DMatrix<f64>, tau: f64) -> String {
    let mask = nonzero_mask(mat, tau);
    format!(
        "# {title}: {}x{}, {} entries above {tau:e}\n{}",
        mat.nrows(),
        mat.ncols(),
        mask.count(),
        mask.render()
    )
}

/// Heatmap of `log10 |value|`; entries at or below `tau` stay white.
pub fn svg_heatmap(title: &str, mat: &DMatrix<f64>, tau: f64) -> String {
    let (rows, cols) = mat.shape();
    let width = 2 * MARGIN + cols * CELL;
    let height = 2 * MARGIN + rows * CELL;
    let peak = mat.amax();
    let lo = tau.max(peak * 1e-12).max(f64::MIN_POSITIVE).log10();
    let hi = peak.max(f64::MIN_POSITIVE).log10();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(title));
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
        MARGIN - 10,
        escape(title)
    );
    for i in 0..rows {
        for j in 0..cols {
            let v = mat[(i, j)].abs();
            let fill = if v > tau {
                let s = if hi > lo { ((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
                let shade = (220.0 * (1.0 - s)) as u8;
                format!("rgb({shade},{shade},255)")
            } else {
                "white".to_string()
            };
            let _ = writeln!(
                svg,
                r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#999" stroke-width="0.5"><title>({}, {}) {:e}</title></rect>"##,
                MARGIN + j * CELL,
                MARGIN + i * CELL,
                i + 1,
                j + 1,
                mat[(i, j)]
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_marks_entries_above_tau() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1e-12, 0.0, -0.5]);
        let text = text_grid("M(1)", &m, 1e-9);
        assert!(text.ends_with("#.\n.#\n"));
    }

    #[test]
    fn svg_has_one_cell_per_entry() {
        let m = DMatrix::from_element(3, 4, 0.25);
        let svg = svg_heatmap("R(2)", &m, 1e-9);
        assert_eq!(svg.matches("<rect x=").count(), 12);
        assert!(svg.starts_with("<svg"));
    }
}
