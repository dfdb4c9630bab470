//! Small fixed-size dense matrices (2×2 and 3×3).

pub type Mat<const D: usize> = [[f64; D]; D];

pub fn identity<const D: usize>() -> Mat<D> {
    let mut m = [[0.0; D]; D];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn transpose<const D: usize>(m: &Mat<D>) -> Mat<D> {
    let mut t = [[0.0; D]; D];
    for i in 0..D {
        for j in 0..D {
            t[j][i] = m[i][j];
        }
    }
    t
}

pub fn mat_mul<const D: usize>(a: &Mat<D>, b: &Mat<D>) -> Mat<D> {
    let mut c = [[0.0; D]; D];
    for i in 0..D {
        for k in 0..D {
            let aik = a[i][k];
            for j in 0..D {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

pub fn mat_vec<const D: usize>(a: &Mat<D>, x: &[f64; D]) -> [f64; D] {
    let mut y = [0.0; D];
    for i in 0..D {
        y[i] = (0..D).map(|j| a[i][j] * x[j]).sum();
    }
    y
}

pub fn scale<const D: usize>(a: &Mat<D>, s: f64) -> Mat<D> {
    let mut c = *a;
    c.iter_mut().flatten().for_each(|x| *x *= s);
    c
}

pub fn add<const D: usize>(a: &Mat<D>, b: &Mat<D>) -> Mat<D> {
    let mut c = *a;
    for i in 0..D {
        for j in 0..D {
            c[i][j] += b[i][j];
        }
    }
    c
}

/// Maximum absolute column sum.
pub fn norm1<const D: usize>(a: &Mat<D>) -> f64 {
    (0..D)
        .map(|j| (0..D).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn trace<const D: usize>(a: &Mat<D>) -> f64 {
    (0..D).map(|i| a[i][i]).sum()
}

pub fn max_abs_diff<const D: usize>(a: &Mat<D>, b: &Mat<D>) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}
