//! Purified full oracles in the standard, phase and Fourier pictures.
//!
//! The function register is materialized as `M` sub-registers `F0..F{M-1}`
//! of cardinality `N`. Moving one picture to the right applies the group
//! transform (QFT or Hadamard) to `Y` (standard to phase) or to every `F(x)`
//! (phase to Fourier); each query is then the conjugate of the previous one.

use crate::distributions::{GroupOp, ProductDistribution};
use crate::error::{Error, Result};
use crate::statevec::{QState, DENSE_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Picture {
    Standard,
    Phase,
    Fourier,
}

impl Picture {
    pub fn name(self) -> &'static str {
        match self {
            Picture::Standard => "standard",
            Picture::Phase => "phase",
            Picture::Fourier => "fourier",
        }
    }

    fn rank(self) -> u8 {
        match self {
            Picture::Standard => 0,
            Picture::Phase => 1,
            Picture::Fourier => 2,
        }
    }
}

pub fn f_register(x: usize) -> String {
    format!("F{x}")
}

#[derive(Clone, Debug)]
pub struct FullOracle {
    dist: ProductDistribution,
    group: GroupOp,
    picture: Picture,
}

impl FullOracle {
    pub fn new(dist: ProductDistribution, group: GroupOp) -> Result<Self> {
        group.validate(dist.range_size())?;
        Ok(Self {
            dist,
            group,
            picture: Picture::Standard,
        })
    }

    pub fn dist(&self) -> &ProductDistribution {
        &self.dist
    }

    pub fn group(&self) -> GroupOp {
        self.group
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn f_registers(&self) -> Vec<(String, usize)> {
        (0..self.dist.domain_size())
            .map(|x| (f_register(x), self.dist.range_size()))
            .collect()
    }

    fn require(&self, expected: Picture) -> Result<()> {
        if self.picture != expected {
            return Err(Error::PictureMismatch {
                expected: expected.name(),
                actual: self.picture.name(),
            });
        }
        Ok(())
    }

    /// Append `F` to the caller's state and prepare `sum_f sqrt(P[f]) |f>`.
    pub fn purified_initial_state(&self, mut state: QState) -> Result<QState> {
        self.require(Picture::Standard)?;
        let layout = state.layout().with_appended(&self.f_registers())?;
        let dim = layout.total_dim();
        if dim > DENSE_CAP {
            return Err(Error::SizeGuard { dim, cap: DENSE_CAP });
        }
        state.append_registers(&self.f_registers())?;
        for x in 0..self.dist.domain_size() {
            state.apply_matrix(&[f_register(x)], self.dist.samp(x))?;
        }
        Ok(state)
    }

    /// The purified initial state expressed directly in the Fourier picture:
    /// every row is `transform * samp(x) |0>`. Returns the oracle retagged.
    pub fn fourier_initial_state(&self, state: QState) -> Result<(QState, FullOracle)> {
        let mut s = self.clone().with_picture(Picture::Standard).purified_initial_state(state)?;
        let n = self.dist.range_size();
        for x in 0..self.dist.domain_size() {
            s.apply_matrix(&[f_register(x)], &self.group.transform(n))?;
        }
        Ok((s, self.clone().with_picture(Picture::Fourier)))
    }

    fn io_indices(&self, state: &QState, x_reg: &str, y_reg: &str) -> Result<(usize, usize, usize)> {
        let layout = state.layout();
        let xi = layout.index_of(x_reg)?;
        let yi = layout.index_of(y_reg)?;
        let (m, n) = (self.dist.domain_size(), self.dist.range_size());
        if layout.cardinality(xi) != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: layout.cardinality(xi),
            });
        }
        if layout.cardinality(yi) != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: layout.cardinality(yi),
            });
        }
        let f0 = layout.index_of(&f_register(0))?;
        Ok((xi, yi, f0))
    }

    /// `|x, y>|f> -> |x, y o f(x)>|f>`.
    pub fn sto_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(Picture::Standard)?;
        let (xi, yi, f0) = self.io_indices(state, x_reg, y_reg)?;
        let (n, g) = (self.dist.range_size(), self.group);
        state.apply_basis_function(|l| l[yi] = g.combine(l[yi], l[f0 + l[xi]], n))
    }

    /// `|x, eta>|f> -> chi(eta f(x)) |x, eta>|f>`.
    pub fn pho_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(Picture::Phase)?;
        let (xi, yi, f0) = self.io_indices(state, x_reg, y_reg)?;
        let (n, g) = (self.dist.range_size(), self.group);
        state.apply_phase(|l| g.phase(l[yi], l[f0 + l[xi]], n));
        Ok(())
    }

    /// `|x, eta>|phi> -> |x, eta>|phi - chi_{x,eta}>`.
    pub fn fo_query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        self.require(Picture::Fourier)?;
        let (xi, yi, f0) = self.io_indices(state, x_reg, y_reg)?;
        let (n, g) = (self.dist.range_size(), self.group);
        state.apply_basis_function(|l| {
            let row = f0 + l[xi];
            l[row] = g.subtract(l[row], l[yi], n);
        })
    }

    /// Query in whatever picture the oracle is in.
    pub fn query(&self, state: &mut QState, x_reg: &str, y_reg: &str) -> Result<()> {
        match self.picture {
            Picture::Standard => self.sto_query(state, x_reg, y_reg),
            Picture::Phase => self.pho_query(state, x_reg, y_reg),
            Picture::Fourier => self.fo_query(state, x_reg, y_reg),
        }
    }

    /// Change basis of `Y` and `F` so the state is expressed in `target`.
    /// `y_regs` lists every register that is used as a query output.
    pub fn convert_picture<S: AsRef<str>>(
        &mut self,
        state: &mut QState,
        y_regs: &[S],
        target: Picture,
    ) -> Result<()> {
        let n = self.dist.range_size();
        let fwd = self.group.transform(n);
        let inv = self.group.inverse_transform(n);
        while self.picture != target {
            let up = target.rank() > self.picture.rank();
            let m = if up { &fwd } else { &inv };
            let step_on_y = matches!(
                (self.picture, up),
                (Picture::Standard, true) | (Picture::Phase, false)
            );
            if step_on_y {
                for y in y_regs {
                    state.apply_matrix(&[y.as_ref()], m)?;
                }
            } else {
                for x in 0..self.dist.domain_size() {
                    state.apply_matrix(&[f_register(x)], m)?;
                }
            }
            self.picture = match (self.picture, up) {
                (Picture::Standard, _) => Picture::Phase,
                (Picture::Phase, true) => Picture::Fourier,
                (Picture::Phase, false) => Picture::Standard,
                (Picture::Fourier, _) => Picture::Phase,
            };
        }
        Ok(())
    }

    /// Switch the picture tag without touching any state; callers that build
    /// states directly in a picture use this.
    pub fn with_picture(mut self, picture: Picture) -> Self {
        self.picture = picture;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{RegisterLayout, C64};
    use approx::assert_abs_diff_eq;

    fn xy(m: usize, n: usize, x: usize, y: usize) -> QState {
        QState::basis(RegisterLayout::new(&[("X", m), ("Y", n)]).unwrap(), &[x, y]).unwrap()
    }

    /// Caller registers plus an explicit function table.
    fn with_table(m: usize, n: usize, x: usize, y: usize, f: &[usize]) -> QState {
        let mut regs = vec![("X".to_string(), m), ("Y".to_string(), n)];
        regs.extend((0..m).map(|i| (f_register(i), n)));
        let mut label = vec![x, y];
        label.extend_from_slice(f);
        QState::basis(RegisterLayout::new(&regs).unwrap(), &label).unwrap()
    }

    #[test]
    fn initial_states() {
        let o = FullOracle::new(ProductDistribution::uniform(1, 2).unwrap(), GroupOp::AddModN).unwrap();
        let s = o.purified_initial_state(xy(1, 2, 0, 0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitude(&[0, 0, 0]).unwrap().re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&[0, 0, 1]).unwrap().re, h, epsilon = 1e-15);

        let o = FullOracle::new(ProductDistribution::bernoulli(2, 0.0).unwrap(), GroupOp::AddModN).unwrap();
        let s = o.purified_initial_state(xy(2, 2, 0, 0)).unwrap();
        assert_abs_diff_eq!(s.amplitude(&[0, 0, 0, 0]).unwrap().norm(), 1.0, epsilon = 1e-15);

        let o = FullOracle::new(ProductDistribution::uniform(2, 2).unwrap(), GroupOp::AddModN).unwrap();
        let s = o.purified_initial_state(xy(2, 2, 0, 0)).unwrap();
        assert_eq!(s.support_len(), 4);
        s.for_each(|_, a| assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-15));
    }

    #[test]
    fn standard_queries() {
        let o = FullOracle::new(ProductDistribution::uniform(2, 2).unwrap(), GroupOp::AddModN).unwrap();
        let mut s = with_table(2, 2, 0, 0, &[1, 0]);
        o.sto_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[0, 1, 1, 0]).unwrap(), C64::new(1.0, 0.0));

        let o4 = FullOracle::new(ProductDistribution::uniform(1, 4).unwrap(), GroupOp::AddModN).unwrap();
        let mut s = with_table(1, 4, 0, 3, &[2]);
        o4.sto_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[0, 1, 2]).unwrap(), C64::new(1.0, 0.0));

        let mut s = o.purified_initial_state(xy(2, 2, 1, 0)).unwrap();
        o.sto_query(&mut s, "X", "Y").unwrap();
        s.for_each(|l, _| assert_eq!(l[1], l[2 + l[0]]));
    }

    #[test]
    fn phase_queries() {
        let o = FullOracle::new(ProductDistribution::uniform(1, 2).unwrap(), GroupOp::AddModN)
            .unwrap()
            .with_picture(Picture::Phase);
        let mut s = with_table(1, 2, 0, 0, &[1]);
        o.pho_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[0, 0, 1]).unwrap(), C64::new(1.0, 0.0));
        let mut s = with_table(1, 2, 0, 1, &[1]);
        o.pho_query(&mut s, "X", "Y").unwrap();
        assert_abs_diff_eq!(s.amplitude(&[0, 1, 1]).unwrap().re, -1.0, epsilon = 1e-15);
        let std = o.clone().with_picture(Picture::Standard);
        assert!(matches!(std.pho_query(&mut s, "X", "Y"), Err(Error::PictureMismatch { .. })));
    }

    #[test]
    fn fourier_queries() {
        let o = FullOracle::new(ProductDistribution::uniform(2, 2).unwrap(), GroupOp::Xor)
            .unwrap()
            .with_picture(Picture::Fourier);
        let mut s = with_table(2, 2, 0, 1, &[0, 0]);
        o.fo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[0, 1, 1, 0]).unwrap(), C64::new(1.0, 0.0));
        let mut s = with_table(2, 2, 1, 0, &[0, 0]);
        o.fo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[1, 0, 0, 0]).unwrap(), C64::new(1.0, 0.0));
        let o4 = FullOracle::new(ProductDistribution::uniform(1, 4).unwrap(), GroupOp::AddModN)
            .unwrap()
            .with_picture(Picture::Fourier);
        let mut s = with_table(1, 4, 0, 3, &[1]);
        o4.fo_query(&mut s, "X", "Y").unwrap();
        assert_eq!(s.amplitude(&[0, 3, 2]).unwrap(), C64::new(1.0, 0.0));
    }

    #[test]
    fn picture_round_trip_and_uniform_fourier_zero() {
        let mut o = FullOracle::new(ProductDistribution::uniform(2, 3).unwrap(), GroupOp::AddModN).unwrap();
        let s0 = o.purified_initial_state(xy(2, 3, 1, 2)).unwrap();
        let mut s = s0.clone();
        o.convert_picture(&mut s, &["Y"], Picture::Fourier).unwrap();
        let f = s.marginal(&["F0", "F1"]).unwrap();
        let heavy: Vec<_> = f.iter().filter(|e| e.1 > 1e-20).collect();
        assert_eq!(heavy.len(), 1);
        assert_eq!(heavy[0].0, vec![0, 0]);
        o.convert_picture(&mut s, &["Y"], Picture::Standard).unwrap();
        assert!(s.l2_distance(&s0).unwrap() < 1e-10);
    }

    #[test]
    fn bernoulli_phase_picture_keeps_marginals() {
        let mut o = FullOracle::new(ProductDistribution::bernoulli(2, 0.3).unwrap(), GroupOp::AddModN).unwrap();
        let mut s = o.purified_initial_state(xy(2, 2, 0, 0)).unwrap();
        o.convert_picture(&mut s, &["Y"], Picture::Phase).unwrap();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
        let m = s.marginal(&["F1"]).unwrap();
        assert_abs_diff_eq!(m[0].1, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1].1, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn oversized_function_register_is_rejected() {
        let o = FullOracle::new(ProductDistribution::uniform(13, 4).unwrap(), GroupOp::AddModN).unwrap();
        let e = o.purified_initial_state(xy(13, 4, 0, 0)).unwrap_err();
        assert!(matches!(e, Error::SizeGuard { .. }));
    }
}
