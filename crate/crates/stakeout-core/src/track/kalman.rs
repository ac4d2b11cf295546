//! Constant-velocity Kalman filter over a box state
//! (cx, cy, w, h, vcx, vcy, vw, vh), all f64.

use crate::geom::BoundingBox;
use nalgebra::{SMatrix, SVector};

type State = SVector<f64, 8>;
type Cov = SMatrix<f64, 8, 8>;
type Meas = SVector<f64, 4>;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanParams {
    pub process_noise: f64,
    pub measurement_noise: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanBox {
    x: State,
    p: Cov,
    params: KalmanParams,
}

fn measurement(bbox: &BoundingBox) -> Meas {
    Meas::new(
        bbox.x + bbox.w / 2.0,
        bbox.y + bbox.h / 2.0,
        bbox.w,
        bbox.h,
    )
}

impl KalmanBox {
    /// Initialize at the measured box with zero velocity; position/size
    /// variance `mn²`, velocity variance `10·mn²`.
    pub fn new(bbox: &BoundingBox, params: KalmanParams) -> Self {
        let z = measurement(bbox);
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&z);
        let mn2 = params.measurement_noise * params.measurement_noise;
        let mut p = Cov::zeros();
        for i in 0..4 {
            p[(i, i)] = mn2;
            p[(i + 4, i + 4)] = 10.0 * mn2;
        }
        Self { x, p, params }
    }

    /// One-frame transition: positions advance by their rates; process noise
    /// `pn²` on positions/sizes, `(pn/2)²` on rates. Sizes never drop
    /// below 1.
    pub fn predict(&mut self) {
        let mut f = Cov::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        let pn2 = self.params.process_noise * self.params.process_noise;
        let mut q = Cov::zeros();
        for i in 0..4 {
            q[(i, i)] = pn2;
            q[(i + 4, i + 4)] = pn2 / 4.0;
        }
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + q;
        self.clamp_size();
    }

    /// Standard measurement update with the box observation; the covariance
    /// is re-symmetrized to keep round-off from accumulating.
    pub fn update(&mut self, bbox: &BoundingBox) {
        let z = measurement(bbox);
        let mut h = SMatrix::<f64, 4, 8>::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        let mn2 = self.params.measurement_noise * self.params.measurement_noise;
        let r = SMatrix::<f64, 4, 4>::identity() * mn2;
        let s = h * self.p * h.transpose() + r;
        let k = self.p * h.transpose() * s.try_inverse().expect("S is positive definite");
        self.x += k * (z - h * self.x);
        self.p = (Cov::identity() - k * h) * self.p;
        self.p = (self.p + self.p.transpose()) * 0.5;
        self.clamp_size();
    }

    fn clamp_size(&mut self) {
        self.x[2] = self.x[2].max(1.0);
        self.x[3] = self.x[3].max(1.0);
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(
            self.x[0] - self.x[2] / 2.0,
            self.x[1] - self.x[3] / 2.0,
            self.x[2],
            self.x[3],
        )
    }

    pub fn state(&self) -> [f64; 8] {
        self.x.into()
    }

    pub fn covariance(&self) -> [[f64; 8]; 8] {
        let mut out = [[0.0; 8]; 8];
        for r in 0..8 {
            for c in 0..8 {
                out[r][c] = self.p[(r, c)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain-array reimplementation of the same recurrence, used to pin the
    /// linear algebra to 1e-9.
    mod reference {
        pub type M8 = [[f64; 8]; 8];

        pub fn matmul(a: &M8, b: &M8) -> M8 {
            let mut out = [[0.0; 8]; 8];
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for k in 0..8 {
                        s += a[i][k] * b[k][j];
                    }
                    out[i][j] = s;
                }
            }
            out
        }

        pub fn transpose(a: &M8) -> M8 {
            let mut out = [[0.0; 8]; 8];
            for i in 0..8 {
                for j in 0..8 {
                    out[i][j] = a[j][i];
                }
            }
            out
        }

        pub fn identity() -> M8 {
            let mut out = [[0.0; 8]; 8];
            for i in 0..8 {
                out[i][i] = 1.0;
            }
            out
        }

        /// Gauss–Jordan inverse of a 4×4.
        pub fn inv4(m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
            let mut a = m;
            let mut inv = [[0.0; 4]; 4];
            for i in 0..4 {
                inv[i][i] = 1.0;
            }
            for col in 0..4 {
                let pivot = (col..4).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs())).unwrap();
                a.swap(col, pivot);
                inv.swap(col, pivot);
                let d = a[col][col];
                for j in 0..4 {
                    a[col][j] /= d;
                    inv[col][j] /= d;
                }
                for r in 0..4 {
                    if r != col {
                        let f = a[r][col];
                        for j in 0..4 {
                            a[r][j] -= f * a[col][j];
                            inv[r][j] -= f * inv[col][j];
                        }
                    }
                }
            }
            inv
        }

        pub struct RefKalman {
            pub x: [f64; 8],
            pub p: M8,
            pub pn: f64,
            pub mn: f64,
        }

        impl RefKalman {
            pub fn new(z: [f64; 4], pn: f64, mn: f64) -> Self {
                let mut x = [0.0; 8];
                x[..4].copy_from_slice(&z);
                let mut p = [[0.0; 8]; 8];
                for i in 0..4 {
                    p[i][i] = mn * mn;
                    p[i + 4][i + 4] = 10.0 * mn * mn;
                }
                Self { x, p, pn, mn }
            }

            pub fn predict(&mut self) {
                let mut f = identity();
                for i in 0..4 {
                    f[i][i + 4] = 1.0;
                }
                let mut nx = [0.0; 8];
                for i in 0..8 {
                    for k in 0..8 {
                        nx[i] += f[i][k] * self.x[k];
                    }
                }
                self.x = nx;
                self.p = matmul(&matmul(&f, &self.p), &transpose(&f));
                for i in 0..4 {
                    self.p[i][i] += self.pn * self.pn;
                    self.p[i + 4][i + 4] += self.pn * self.pn / 4.0;
                }
                self.x[2] = self.x[2].max(1.0);
                self.x[3] = self.x[3].max(1.0);
            }

            pub fn update(&mut self, z: [f64; 4]) {
                // S = P[0..4][0..4] + R; K = P[:, 0..4] S⁻¹.
                let mut s = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        s[i][j] = self.p[i][j];
                    }
                    s[i][i] += self.mn * self.mn;
                }
                let si = inv4(s);
                let mut k = [[0.0; 4]; 8];
                for i in 0..8 {
                    for j in 0..4 {
                        for m in 0..4 {
                            k[i][j] += self.p[i][m] * si[m][j];
                        }
                    }
                }
                let mut innov = [0.0; 4];
                for i in 0..4 {
                    innov[i] = z[i] - self.x[i];
                }
                for i in 0..8 {
                    for j in 0..4 {
                        self.x[i] += k[i][j] * innov[j];
                    }
                }
                // P = (I − K H) P with H selecting the first four rows.
                let mut ikh = identity();
                for i in 0..8 {
                    for j in 0..4 {
                        ikh[i][j] -= k[i][j];
                    }
                }
                self.p = matmul(&ikh, &self.p);
                let pt = transpose(&self.p);
                for i in 0..8 {
                    for j in 0..8 {
                        self.p[i][j] = (self.p[i][j] + pt[i][j]) * 0.5;
                    }
                }
                self.x[2] = self.x[2].max(1.0);
                self.x[3] = self.x[3].max(1.0);
            }
        }
    }

    fn center_box(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    #[test]
    fn matches_plain_array_reference_to_1e9() {
        let mut kf = KalmanBox::new(&center_box(10.0, 20.0, 30.0, 40.0), KalmanParams::default());
        let mut rf = reference::RefKalman::new([10.0, 20.0, 30.0, 40.0], 1.0, 2.0);
        let script: &[(&str, [f64; 4])] = &[
            ("predict", [0.0; 4]),
            ("update", [12.5, 21.0, 30.5, 39.0]),
            ("predict", [0.0; 4]),
            ("predict", [0.0; 4]),
            ("update", [17.0, 23.5, 31.0, 38.0]),
            ("predict", [0.0; 4]),
            ("update", [19.25, 24.0, 31.5, 37.5]),
        ];
        for (op, z) in script {
            match *op {
                "predict" => {
                    kf.predict();
                    rf.predict();
                }
                _ => {
                    kf.update(&center_box(z[0], z[1], z[2], z[3]));
                    rf.update(*z);
                }
            }
            let state = kf.state();
            for i in 0..8 {
                assert!(
                    (state[i] - rf.x[i]).abs() < 1e-9,
                    "{op}: state[{i}] {} vs {}",
                    state[i],
                    rf.x[i]
                );
            }
            let cov = kf.covariance();
            for r in 0..8 {
                for c in 0..8 {
                    assert!(
                        (cov[r][c] - rf.p[r][c]).abs() < 1e-9,
                        "{op}: P[{r}][{c}] {} vs {}",
                        cov[r][c],
                        rf.p[r][c]
                    );
                }
            }
        }
    }

    #[test]
    fn learns_constant_velocity_and_coasts_along_it() {
        let mut kf = KalmanBox::new(&center_box(50.0, 60.0, 20.0, 40.0), KalmanParams::default());
        for t in 1..=12 {
            kf.predict();
            kf.update(&center_box(50.0 + 5.0 * t as f64, 60.0, 20.0, 40.0));
        }
        let state = kf.state();
        assert!((state[4] - 5.0).abs() < 0.5, "vx {}", state[4]);
        // Coast: three predictions keep moving at the learned rate.
        let before = kf.bbox();
        for _ in 0..3 {
            kf.predict();
        }
        let after = kf.bbox();
        let moved = (after.x + after.w / 2.0) - (before.x + before.w / 2.0);
        assert!((moved - 15.0).abs() < 1.5, "coasted {moved}");
        assert!((after.y - before.y).abs() < 1.0);
    }

    #[test]
    fn covariance_stays_symmetric_and_sizes_stay_positive() {
        let mut kf = KalmanBox::new(&center_box(5.0, 5.0, 1.0, 1.0), KalmanParams::default());
        for t in 0..40 {
            kf.predict();
            // Shrinking measurements try to drag w/h negative through the
            // velocity estimate.
            let s = (1.0 - t as f64 * 0.2).max(0.0);
            kf.update(&center_box(5.0, 5.0, s, s));
            let cov = kf.covariance();
            for r in 0..8 {
                for c in 0..8 {
                    assert!((cov[r][c] - cov[c][r]).abs() < 1e-12);
                }
            }
            let st = kf.state();
            assert!(st[2] >= 1.0 && st[3] >= 1.0);
        }
        let b = kf.bbox();
        assert!(b.w >= 1.0 && b.h >= 1.0);
    }
}
