//! Local maxima, topographic prominence and half-prominence widths.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
    /// Fractional sample positions where the peak crosses half prominence.
    pub left_half: f64,
    pub right_half: f64,
}

/// All interior local maxima of `y`. A flat top reports its middle sample.
pub(crate) fn find_peaks(y: &[f64]) -> Vec<Peak> {
    let n = y.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                peaks.push(describe(y, (i + j) / 2));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn describe(y: &[f64], index: usize) -> Peak {
    let height = y[index];
    let mut left_base = index;
    let mut left_min = height;
    let mut j = index;
    while j > 0 {
        j -= 1;
        if y[j] > height {
            break;
        }
        if y[j] < left_min {
            left_min = y[j];
            left_base = j;
        }
    }
    let mut right_base = index;
    let mut right_min = height;
    let mut j = index;
    while j + 1 < y.len() {
        j += 1;
        if y[j] > height {
            break;
        }
        if y[j] < right_min {
            right_min = y[j];
            right_base = j;
        }
    }
    let prominence = height - left_min.max(right_min);
    let level = height - 0.5 * prominence;

    let mut k = index;
    while k > left_base && y[k] > level {
        k -= 1;
    }
    let left_half = if y[k] < level && y[k + 1] != y[k] {
        k as f64 + (level - y[k]) / (y[k + 1] - y[k])
    } else {
        k as f64
    };
    let mut k = index;
    while k < right_base && y[k] > level {
        k += 1;
    }
    let right_half = if y[k] < level && y[k - 1] != y[k] {
        k as f64 - (level - y[k]) / (y[k - 1] - y[k])
    } else {
        k as f64
    };
    Peak {
        index,
        height,
        prominence,
        left_half,
        right_half,
    }
}

/// Linear interpolation of `x` at a fractional sample position.
pub(crate) fn interp(x: &[f64], position: f64) -> f64 {
    let last = x.len() - 1;
    let position = position.clamp(0.0, last as f64);
    let i = (position.floor() as usize).min(last.saturating_sub(1));
    let frac = position - i as f64;
    if last == 0 {
        return x[0];
    }
    x[i] + frac * (x[i + 1] - x[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_peak() {
        let y = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0];
        let peaks = find_peaks(&y);
        assert_eq!(peaks.len(), 1);
        let p = peaks[0];
        assert_eq!(p.index, 3);
        assert_eq!(p.prominence, 3.0);
        assert!((p.left_half - 1.5).abs() < 1e-12);
        assert!((p.right_half - 4.5).abs() < 1e-12);
    }

    #[test]
    fn prominence_uses_higher_base() {
        let y = [0.0, 5.0, 1.0, 3.0, 2.0, 2.5, 0.0];
        let peaks = find_peaks(&y);
        let small = peaks.iter().find(|p| p.index == 3).unwrap();
        assert_eq!(small.prominence, 2.0);
        let tall = peaks.iter().find(|p| p.index == 1).unwrap();
        assert_eq!(tall.prominence, 5.0);
    }

    #[test]
    fn flat_input_has_no_peaks() {
        assert!(find_peaks(&[1.0; 20]).is_empty());
    }

    #[test]
    fn plateau_reports_middle() {
        let y = [0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(find_peaks(&y)[0].index, 2);
    }
}
