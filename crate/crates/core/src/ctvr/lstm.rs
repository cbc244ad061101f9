use super::linalg::{add_assign, sigmoid, Matrix};
use super::CtvrError;
use crate::imaging::SeededRng;

/// Weights of one direction. Gate pre-activations:
/// `i = s(U_iX x + U_iM m + U_iE e_prev + B_i)`,
/// `F = s(U_FX x + U_FM m + U_FE e_prev + B_F)`,
/// `e = F e_prev + i tanh(U_EX x + U_EM m + B_E)`,
/// `O = s(U_OX x + U_OM m + U_OE e + B_O)`, `m = O tanh(e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    pub u_ix: Matrix,
    pub u_im: Matrix,
    pub u_ie: Matrix,
    pub u_fx: Matrix,
    pub u_fm: Matrix,
    pub u_fe: Matrix,
    pub u_ex: Matrix,
    pub u_em: Matrix,
    pub u_ox: Matrix,
    pub u_om: Matrix,
    pub u_oe: Matrix,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_e: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmDirection {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let x = || Matrix::zeros(hidden, input);
        let h = || Matrix::zeros(hidden, hidden);
        Self {
            u_ix: x(),
            u_im: h(),
            u_ie: h(),
            u_fx: x(),
            u_fm: h(),
            u_fe: h(),
            u_ex: x(),
            u_em: h(),
            u_ox: x(),
            u_om: h(),
            u_oe: h(),
            b_i: vec![0.0; hidden],
            b_f: vec![0.0; hidden],
            b_e: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
        }
    }

    pub fn random(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut d = Self::zeros(input, hidden);
        for m in d.matrices_mut() {
            *m = Matrix::random(m.rows(), m.cols(), rng);
        }
        d
    }

    pub fn input_size(&self) -> usize {
        self.u_ix.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_ix.rows()
    }

    fn matrices_mut(&mut self) -> [&mut Matrix; 11] {
        [
            &mut self.u_ix,
            &mut self.u_im,
            &mut self.u_ie,
            &mut self.u_fx,
            &mut self.u_fm,
            &mut self.u_fe,
            &mut self.u_ex,
            &mut self.u_em,
            &mut self.u_ox,
            &mut self.u_om,
            &mut self.u_oe,
        ]
    }

    pub(crate) fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("u_ix", self.u_ix.data()),
            ("u_im", self.u_im.data()),
            ("u_ie", self.u_ie.data()),
            ("u_fx", self.u_fx.data()),
            ("u_fm", self.u_fm.data()),
            ("u_fe", self.u_fe.data()),
            ("u_ex", self.u_ex.data()),
            ("u_em", self.u_em.data()),
            ("u_ox", self.u_ox.data()),
            ("u_om", self.u_om.data()),
            ("u_oe", self.u_oe.data()),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_e", &self.b_e),
            ("b_o", &self.b_o),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            u_ix,
            u_im,
            u_ie,
            u_fx,
            u_fm,
            u_fe,
            u_ex,
            u_em,
            u_ox,
            u_om,
            u_oe,
            b_i,
            b_f,
            b_e,
            b_o,
        } = self;
        vec![
            u_ix.data_mut(),
            u_im.data_mut(),
            u_ie.data_mut(),
            u_fx.data_mut(),
            u_fm.data_mut(),
            u_fe.data_mut(),
            u_ex.data_mut(),
            u_em.data_mut(),
            u_ox.data_mut(),
            u_om.data_mut(),
            u_oe.data_mut(),
            b_i,
            b_f,
            b_e,
            b_o,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Both directions plus the shared visual-memory projection `P` and depth `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiVlstmParams {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
    /// `rows(P) x hidden`
    pub projection: Matrix,
    pub depth: usize,
}

impl BiVlstmParams {
    /// Zero weights, identity projection.
    pub fn zeros(input: usize, hidden: usize, depth: usize) -> Self {
        Self {
            forward: LstmDirection::zeros(input, hidden),
            backward: LstmDirection::zeros(input, hidden),
            projection: Matrix::identity(hidden, hidden),
            depth,
        }
    }

    pub fn random(input: usize, hidden: usize, depth: usize, rng: &mut SeededRng) -> Self {
        Self {
            forward: LstmDirection::random(input, hidden, rng),
            backward: LstmDirection::random(input, hidden, rng),
            projection: Matrix::identity(hidden, hidden),
            depth,
        }
    }

    pub fn direction(&self, dir: Direction) -> &LstmDirection {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    /// `|J_T| = 2 N rows(P)`
    pub fn output_size(&self) -> usize {
        2 * self.depth * self.projection.rows()
    }
}

pub(crate) struct CellCache {
    m_prev: Vec<f64>,
    e_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    e: Vec<f64>,
    th: Vec<f64>,
}

fn cell_forward(x: &[f64], m_prev: &[f64], e_prev: &[f64], p: &LstmDirection) -> (Vec<f64>, CellCache) {
    let gate = |ux: &Matrix, um: &Matrix, b: &[f64]| {
        let mut a = b.to_vec();
        ux.mul_vec_add(x, &mut a);
        um.mul_vec_add(m_prev, &mut a);
        a
    };
    let mut ai = gate(&p.u_ix, &p.u_im, &p.b_i);
    p.u_ie.mul_vec_add(e_prev, &mut ai);
    let mut af = gate(&p.u_fx, &p.u_fm, &p.b_f);
    p.u_fe.mul_vec_add(e_prev, &mut af);
    let ag = gate(&p.u_ex, &p.u_em, &p.b_e);
    let i: Vec<f64> = ai.into_iter().map(sigmoid).collect();
    let f: Vec<f64> = af.into_iter().map(sigmoid).collect();
    let g: Vec<f64> = ag.into_iter().map(f64::tanh).collect();
    let e: Vec<f64> = (0..i.len()).map(|k| f[k] * e_prev[k] + i[k] * g[k]).collect();
    let mut ao = gate(&p.u_ox, &p.u_om, &p.b_o);
    p.u_oe.mul_vec_add(&e, &mut ao);
    let o: Vec<f64> = ao.into_iter().map(sigmoid).collect();
    let th: Vec<f64> = e.iter().map(|v| v.tanh()).collect();
    let m: Vec<f64> = o.iter().zip(&th).map(|(a, b)| a * b).collect();
    (
        m,
        CellCache {
            m_prev: m_prev.to_vec(),
            e_prev: e_prev.to_vec(),
            i,
            f,
            g,
            o,
            e,
            th,
        },
    )
}

/// Gradients w.r.t. `m_prev`, `e_prev` and `x` of one cell step; parameter
/// gradients accumulate into `grad`.
fn cell_backward(
    x: &[f64],
    c: &CellCache,
    p: &LstmDirection,
    dm: &[f64],
    de_next: &[f64],
    grad: &mut LstmDirection,
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = dm.len();
    let da_o: Vec<f64> = (0..h).map(|k| dm[k] * c.th[k] * c.o[k] * (1.0 - c.o[k])).collect();
    let mut de: Vec<f64> = (0..h)
        .map(|k| de_next[k] + dm[k] * c.o[k] * (1.0 - c.th[k] * c.th[k]))
        .collect();
    p.u_oe.mul_t_vec_add(&da_o, &mut de);
    let da_i: Vec<f64> = (0..h).map(|k| de[k] * c.g[k] * c.i[k] * (1.0 - c.i[k])).collect();
    let da_f: Vec<f64> = (0..h).map(|k| de[k] * c.e_prev[k] * c.f[k] * (1.0 - c.f[k])).collect();
    let da_g: Vec<f64> = (0..h).map(|k| de[k] * c.i[k] * (1.0 - c.g[k] * c.g[k])).collect();

    let mut de_prev: Vec<f64> = (0..h).map(|k| de[k] * c.f[k]).collect();
    p.u_ie.mul_t_vec_add(&da_i, &mut de_prev);
    p.u_fe.mul_t_vec_add(&da_f, &mut de_prev);

    let mut dm_prev = vec![0.0; h];
    for (u, a) in [(&p.u_im, &da_i), (&p.u_fm, &da_f), (&p.u_em, &da_g), (&p.u_om, &da_o)] {
        u.mul_t_vec_add(a, &mut dm_prev);
    }
    for (u, a) in [(&p.u_ix, &da_i), (&p.u_fx, &da_f), (&p.u_ex, &da_g), (&p.u_ox, &da_o)] {
        u.mul_t_vec_add(a, dx);
    }

    grad.u_ix.add_outer(&da_i, x);
    grad.u_im.add_outer(&da_i, &c.m_prev);
    grad.u_ie.add_outer(&da_i, &c.e_prev);
    grad.u_fx.add_outer(&da_f, x);
    grad.u_fm.add_outer(&da_f, &c.m_prev);
    grad.u_fe.add_outer(&da_f, &c.e_prev);
    grad.u_ex.add_outer(&da_g, x);
    grad.u_em.add_outer(&da_g, &c.m_prev);
    grad.u_ox.add_outer(&da_o, x);
    grad.u_om.add_outer(&da_o, &c.m_prev);
    grad.u_oe.add_outer(&da_o, &c.e);
    add_assign(&mut grad.b_i, &da_i);
    add_assign(&mut grad.b_f, &da_f);
    add_assign(&mut grad.b_e, &da_g);
    add_assign(&mut grad.b_o, &da_o);
    (dm_prev, de_prev)
}

fn check_dims(x: &[f64], m: &[f64], e: &[f64], p: &LstmDirection) -> Result<(), CtvrError> {
    if x.len() != p.input_size() || m.len() != p.hidden_size() || e.len() != p.hidden_size() {
        return Err(CtvrError::Shape(format!(
            "lstm cell: expected input {} and state {}, got {}, {}, {}",
            p.input_size(),
            p.hidden_size(),
            x.len(),
            m.len(),
            e.len()
        )));
    }
    Ok(())
}

/// One step of the selected direction; returns `(m_t, e_t)`.
pub fn bivlstm_cell(
    x: &[f64],
    m_prev: &[f64],
    e_prev: &[f64],
    params: &BiVlstmParams,
    dir: Direction,
) -> Result<(Vec<f64>, Vec<f64>), CtvrError> {
    let p = params.direction(dir);
    check_dims(x, m_prev, e_prev, p)?;
    let (m, cache) = cell_forward(x, m_prev, e_prev, p);
    Ok((m, cache.e))
}

pub(crate) struct SequenceCache {
    forward: Vec<CellCache>,
    backward: Vec<CellCache>,
    /// Hidden states, in each direction's own step order.
    m_forward: Vec<Vec<f64>>,
    m_backward: Vec<Vec<f64>>,
}

fn run_direction(rows: &[Vec<f64>], p: &LstmDirection, reverse: bool) -> (Vec<CellCache>, Vec<Vec<f64>>) {
    let h = p.hidden_size();
    let (mut m, mut e) = (vec![0.0; h], vec![0.0; h]);
    let mut caches = Vec::with_capacity(rows.len());
    let mut ms = Vec::with_capacity(rows.len());
    for t in 0..rows.len() {
        let r = if reverse { rows.len() - 1 - t } else { t };
        let (m_new, cache) = cell_forward(&rows[r], &m, &e, p);
        m = m_new;
        e.clone_from(&cache.e);
        ms.push(m.clone());
        caches.push(cache);
    }
    (caches, ms)
}

pub(crate) fn sequence_forward(
    rows: &[Vec<f64>],
    params: &BiVlstmParams,
) -> Result<(Vec<f64>, SequenceCache), CtvrError> {
    if rows.len() < params.depth || params.depth == 0 {
        return Err(CtvrError::Contract(format!(
            "sequence of {} rows is shorter than memory depth {}",
            rows.len(),
            params.depth
        )));
    }
    for r in rows {
        if r.len() != params.forward.input_size() {
            return Err(CtvrError::Shape(format!(
                "lstm sequence: row length {} differs from input size {}",
                r.len(),
                params.forward.input_size()
            )));
        }
    }
    if params.projection.cols() != params.forward.hidden_size() {
        return Err(CtvrError::Shape("lstm projection width differs from hidden size".into()));
    }
    let (fc, fm) = run_direction(rows, &params.forward, false);
    let (bc, bm) = run_direction(rows, &params.backward, true);
    let t = rows.len();
    let mut j = Vec::with_capacity(params.output_size());
    for ms in [&fm, &bm] {
        for lag in 0..params.depth {
            j.extend(params.projection.mul_vec(&ms[t - 1 - lag]));
        }
    }
    Ok((
        j,
        SequenceCache {
            forward: fc,
            backward: bc,
            m_forward: fm,
            m_backward: bm,
        },
    ))
}

/// Gradient w.r.t. each input row; parameter gradients accumulate into `grad`.
pub(crate) fn sequence_backward(
    rows: &[Vec<f64>],
    params: &BiVlstmParams,
    cache: &SequenceCache,
    d_j: &[f64],
    grad: &mut BiVlstmParams,
) -> Vec<Vec<f64>> {
    let t_len = rows.len();
    let h = params.forward.hidden_size();
    let pr = params.projection.rows();
    let mut d_rows = vec![vec![0.0; params.forward.input_size()]; t_len];
    let dirs = [
        (&params.forward, &cache.forward, &cache.m_forward, &mut grad.forward, false),
        (&params.backward, &cache.backward, &cache.m_backward, &mut grad.backward, true),
    ];
    let mut block = 0;
    for (p, caches, ms, g, reverse) in dirs {
        let mut dm_ext = vec![vec![0.0; h]; t_len];
        for lag in 0..params.depth {
            let step = t_len - 1 - lag;
            let dj = &d_j[block * pr..(block + 1) * pr];
            params.projection.mul_t_vec_add(dj, &mut dm_ext[step]);
            grad.projection.add_outer(dj, &ms[step]);
            block += 1;
        }
        let (mut dm_carry, mut de_carry) = (vec![0.0; h], vec![0.0; h]);
        for step in (0..t_len).rev() {
            let r = if reverse { t_len - 1 - step } else { step };
            let dm: Vec<f64> = dm_ext[step].iter().zip(&dm_carry).map(|(a, b)| a + b).collect();
            let (dmp, dep) = cell_backward(&rows[r], &caches[step], p, &dm, &de_carry, g, &mut d_rows[r]);
            dm_carry = dmp;
            de_carry = dep;
        }
    }
    d_rows
}

/// Runs both directions over `rows` (forward top to bottom, backward bottom
/// to top) and returns `J_T`: the projected hidden states of each
/// direction's last `N` steps, most recent first, forward block first.
pub fn bivlstm_sequence(rows: &[Vec<f64>], params: &BiVlstmParams) -> Result<Vec<f64>, CtvrError> {
    sequence_forward(rows, params).map(|(j, _)| j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::rng_from_seed;
    use rand::Rng;

    /// Straight-line transcription of the gate equations, element by element.
    fn oracle(x: &[f64], m: &[f64], e: &[f64], p: &LstmDirection) -> (Vec<f64>, Vec<f64>) {
        let h = m.len();
        let dot = |w: &Matrix, r: usize, v: &[f64]| -> f64 { (0..v.len()).map(|c| w.get(r, c) * v[c]).sum() };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut e_t = vec![0.0; h];
        let mut m_t = vec![0.0; h];
        for r in 0..h {
            let i = sig(dot(&p.u_ix, r, x) + dot(&p.u_im, r, m) + dot(&p.u_ie, r, e) + p.b_i[r]);
            let f = sig(dot(&p.u_fx, r, x) + dot(&p.u_fm, r, m) + dot(&p.u_fe, r, e) + p.b_f[r]);
            e_t[r] = f * e[r] + i * (dot(&p.u_ex, r, x) + dot(&p.u_em, r, m) + p.b_e[r]).tanh();
        }
        for r in 0..h {
            let o = sig(dot(&p.u_ox, r, x) + dot(&p.u_om, r, m) + dot(&p.u_oe, r, &e_t) + p.b_o[r]);
            m_t[r] = o * e_t[r].tanh();
        }
        (m_t, e_t)
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = BiVlstmParams::zeros(3, 2, 1);
        let (m, e) = bivlstm_cell(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p, Direction::Forward).unwrap();
        assert_eq!((m, e), (vec![0.0; 2], vec![0.0; 2]));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = BiVlstmParams::zeros(2, 2, 1);
        p.forward.b_f = vec![10.0; 2];
        let (_, e) = bivlstm_cell(&[0.3, 0.4], &[0.0; 2], &[0.7, -0.2], &p, Direction::Forward).unwrap();
        assert!((e[0] - 0.7).abs() < 1e-4 && (e[1] + 0.2).abs() < 1e-4);
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = rng_from_seed(21);
        for _ in 0..10 {
            let mut p = BiVlstmParams::random(4, 3, 1, &mut rng);
            for b in [&mut p.backward.b_i, &mut p.backward.b_f, &mut p.backward.b_e, &mut p.backward.b_o] {
                b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m: Vec<f64> = (0..3).map(|_| rng.random_range(-0.9..0.9)).collect();
            let e: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (m1, e1) = bivlstm_cell(&x, &m, &e, &p, Direction::Backward).unwrap();
            let (m2, e2) = oracle(&x, &m, &e, &p.backward);
            for (a, b) in m1.iter().chain(&e1).zip(m2.iter().chain(&e2)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sequence_shapes_and_halves() {
        let rows: Vec<Vec<f64>> = (0..4).map(|r| vec![r as f64 * 0.1, 0.5]).collect();
        let zero = BiVlstmParams::zeros(2, 3, 1);
        assert_eq!(bivlstm_sequence(&rows, &zero).unwrap(), vec![0.0; 6]);

        let mut rng = rng_from_seed(2);
        let p = BiVlstmParams::random(2, 3, 1, &mut rng);
        let j = bivlstm_sequence(&rows, &p).unwrap();
        let (mut m, mut e) = (vec![0.0; 3], vec![0.0; 3]);
        for r in &rows {
            (m, e) = bivlstm_cell(r, &m, &e, &p, Direction::Forward).unwrap();
        }
        assert_eq!(&j[..3], &m[..]);

        let deep = BiVlstmParams::random(2, 3, 3, &mut rng);
        assert_eq!(bivlstm_sequence(&rows, &deep).unwrap().len(), 18);
        assert!(matches!(bivlstm_sequence(&rows[..2], &deep), Err(CtvrError::Contract(_))));
    }

    #[test]
    fn palindrome_with_mirrored_params_gives_equal_halves() {
        let mut rng = rng_from_seed(5);
        let mut p = BiVlstmParams::random(2, 3, 2, &mut rng);
        p.backward = p.forward.clone();
        let rows = vec![vec![0.1, 0.9], vec![0.5, -0.3], vec![0.2, 0.2], vec![0.5, -0.3], vec![0.1, 0.9]];
        let j = bivlstm_sequence(&rows, &p).unwrap();
        assert_eq!(j[..6], j[6..]);
    }
}
