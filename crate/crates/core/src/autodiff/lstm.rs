//! Bidirectional LSTM assembled from tape primitives.
//!
//! Gate layout along the `4H` axis is input, forget, candidate, output.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// One direction's weights: `wx: [C, 4H]`, `wh: [H, 4H]`, `b: [4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

fn hidden_size(tape: &Tape, w: &LstmVars) -> Result<usize> {
    let (h, four_h) =
        tape.value(w.wh).dims2().ok_or_else(|| Error::Shape("recurrent weights must be [H, 4H]".into()))?;
    if four_h != 4 * h {
        return Err(Error::Shape(format!("recurrent weights must be [H, 4H], got [{h}, {four_h}]")));
    }
    Ok(h)
}

/// Runs the cell over `steps` in order and returns the final hidden state.
pub fn lstm_final_state(tape: &mut Tape, steps: &[Var], w: &LstmVars) -> Result<Var> {
    let hsz = hidden_size(tape, w)?;
    let mut h = tape.input(super::Tensor::zeros(&[hsz]));
    let mut c = tape.input(super::Tensor::zeros(&[hsz]));
    for &x in steps {
        let zx = tape.dense(x, w.wx, Some(w.b))?;
        let zh = tape.dense(h, w.wh, None)?;
        let z = tape.add(zx, zh)?;
        let i = tape.slice(z, 0, hsz)?;
        let f = tape.slice(z, hsz, hsz)?;
        let g = tape.slice(z, 2 * hsz, hsz)?;
        let o = tape.slice(z, 3 * hsz, hsz)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        h = tape.mul(o, squashed)?;
    }
    Ok(h)
}

/// `x: [L, C]` to `[2H]`: the forward pass's last state followed by the
/// backward pass's last state.
pub fn bilstm(tape: &mut Tape, x: Var, forward: &LstmVars, backward: &LstmVars) -> Result<Var> {
    let (l, _) = tape.value(x).dims2().ok_or_else(|| Error::Shape("bilstm input must be [L, C]".into()))?;
    let rows = (0..l).map(|t| tape.row(x, t)).collect::<Result<Vec<_>>>()?;
    let hf = lstm_final_state(tape, &rows, forward)?;
    let reversed: Vec<Var> = rows.iter().rev().copied().collect();
    let hb = lstm_final_state(tape, &reversed, backward)?;
    tape.concat(&[hf, hb])
}
