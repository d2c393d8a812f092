//! Relational propagation, layer aggregation, GRU evolution and the branch
//! encoder, all recorded on a [`Graph`].
//!
//! Row-vector convention: an entity representation is a row, so a weight
//! `W` acts as `x · W`.

use crate::event::{AtomicEvent, HistoryWindow};
use crate::kernel::{Graph, Var};

use super::params::{BranchVars, GruVars, RgcnVars};
use super::ModelError;

/// Entity and relation tables produced by one context branch.
#[derive(Clone, Copy, Debug)]
pub struct BranchEncoding {
    pub entities: Var,
    pub relations: Var,
}

/// One relational propagation step over a snapshot:
/// `out[o] = f(mean_{(s,r,o)} (e_s + r) · W1 + e_o · W2)` with the mean taken
/// over events whose object is `o`; entities with no incoming event keep only
/// the self-loop term.
pub fn rgcn_layer(
    g: &mut Graph,
    events: &[AtomicEvent],
    entities: Var,
    relations: Var,
    weights: &RgcnVars,
    slope: f64,
) -> Result<Var, ModelError> {
    let n = g.value(entities).rows();
    let self_term = g.matmul(entities, weights.self_loop)?;
    let pre = if events.is_empty() {
        self_term
    } else {
        let mut degree = vec![0usize; n];
        for e in events {
            if let Some(d) = degree.get_mut(e.object as usize) {
                *d += 1;
            }
        }
        let subj: Vec<usize> = events.iter().map(|e| e.subject as usize).collect();
        let rel: Vec<usize> = events.iter().map(|e| e.relation as usize).collect();
        let obj: Vec<usize> = events.iter().map(|e| e.object as usize).collect();
        let weights_per_event: Vec<f64> = obj
            .iter()
            .map(|&o| degree.get(o).map_or(0.0, |&d| 1.0 / d as f64))
            .collect();
        let hs = g.gather(entities, &subj)?;
        let hr = g.gather(relations, &rel)?;
        let msg = g.add(hs, hr)?;
        let pooled = g.scatter(msg, &obj, &weights_per_event, n)?;
        let neighbor = g.matmul(pooled, weights.neighbor)?;
        g.add(neighbor, self_term)?
    };
    Ok(g.leaky(pre, slope))
}

/// Element-wise sum of the propagation input and every layer output.
pub fn aggregate_layers(g: &mut Graph, input: Var, outputs: &[Var]) -> Result<Var, ModelError> {
    let mut acc = input;
    for &o in outputs {
        acc = g.add(acc, o)?;
    }
    Ok(acc)
}

/// Row-wise GRU cell with input `x` and previous state `h`.
pub fn gru_step(g: &mut Graph, x: Var, h: Var, p: &GruVars) -> Result<Var, ModelError> {
    let gate = |g: &mut Graph, w: Var, u: Var, b: Var, state: Var| -> Result<Var, ModelError> {
        let a = g.matmul(x, w)?;
        let c = g.matmul(state, u)?;
        let s = g.add(a, c)?;
        Ok(g.add_row(s, b)?)
    };
    let z_pre = gate(g, p.wz, p.uz, p.bz, h)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.wr, p.ur, p.br, h)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h)?;
    let cand_pre = gate(g, p.wh, p.uh, p.bh, rh)?;
    let cand = g.tanh(cand_pre);
    // (1 - z) ⊙ h + z ⊙ h̃  =  h + z ⊙ (h̃ - h)
    let diff = g.sub(cand, h)?;
    let step = g.mul(z, diff)?;
    Ok(g.add(h, step)?)
}

/// Runs `layers` propagation steps and a GRU update for every snapshot of
/// `window`, starting from the branch's entity table.
pub fn encode_branch(
    g: &mut Graph,
    window: &HistoryWindow<'_>,
    params: &BranchVars,
    layers: usize,
    slope: f64,
) -> Result<BranchEncoding, ModelError> {
    if layers > params.layers.len() {
        return Err(ModelError::InvalidConfig(format!(
            "branch has {} propagation layers, {layers} requested",
            params.layers.len()
        )));
    }
    let mut state = params.entity_table;
    for snapshot in window.iter() {
        let mut current = state;
        let mut outputs = Vec::with_capacity(layers);
        for layer in &params.layers[..layers] {
            current = rgcn_layer(g, &snapshot.events, current, params.relation_table, layer, slope)?;
            outputs.push(current);
        }
        let aggregated = aggregate_layers(g, state, &outputs)?;
        state = gru_step(g, aggregated, state, &params.gru)?;
    }
    Ok(BranchEncoding {
        entities: state,
        relations: params.relation_table,
    })
}
