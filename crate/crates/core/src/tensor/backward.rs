//! Local gradient rules for every [`Op`].

use super::kernels::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::tape::{Node, Op};

fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: usize) -> Option<&'g mut Vec<f64>> {
    let n = &nodes[id];
    if !n.requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; n.rows * n.cols]))
}

pub(crate) fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let (rows, cols) = (node.rows, node.cols);
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (n, k) = (nodes[*a].rows, nodes[*a].cols);
            let m = nodes[*b].cols;
            if let Some(da) = slot(nodes, grads, *a) {
                matmul_nt_acc(g, &nodes[*b].value, da, n, m, k);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                matmul_tn_acc(&nodes[*a].value, g, db, n, k, m);
            }
        }
        Op::MatMulNT(a, b) => {
            let (n, k) = (nodes[*a].rows, nodes[*a].cols);
            let m = nodes[*b].rows;
            if let Some(da) = slot(nodes, grads, *a) {
                matmul_acc(g, &nodes[*b].value, da, n, m, k);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                matmul_tn_acc(g, &nodes[*a].value, db, n, m, k);
            }
        }
        Op::Add(a, b) => {
            for (src, sign) in [(*a, 1.0), (*b, 1.0)] {
                if let Some(d) = slot(nodes, grads, src) {
                    axpy(d, g, sign);
                }
            }
        }
        Op::Sub(a, b) => {
            for (src, sign) in [(*a, 1.0), (*b, -1.0)] {
                if let Some(d) = slot(nodes, grads, src) {
                    axpy(d, g, sign);
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, gi), bi) in da.iter_mut().zip(g).zip(&nodes[*b].value) {
                    *d += gi * bi;
                }
            }
            if let Some(db) = slot(nodes, grads, *b) {
                for ((d, gi), ai) in db.iter_mut().zip(g).zip(&nodes[*a].value) {
                    *d += gi * ai;
                }
            }
        }
        Op::AddRow(a, bias) => {
            if let Some(da) = slot(nodes, grads, *a) {
                axpy(da, g, 1.0);
            }
            if let Some(db) = slot(nodes, grads, *bias) {
                for row in g.chunks(cols) {
                    axpy(db, row, 1.0);
                }
            }
        }
        Op::Scale(a, s) => {
            if let Some(da) = slot(nodes, grads, *a) {
                axpy(da, g, *s);
            }
        }
        Op::AddScalar(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                axpy(da, g, 1.0);
            }
        }
        Op::Relu(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, gi), yi) in da.iter_mut().zip(g).zip(y) {
                    if *yi > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::Exp(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, gi), yi) in da.iter_mut().zip(g).zip(y) {
                    *d += gi * yi;
                }
            }
        }
        Op::Log(a) => {
            let x = &nodes[*a].value;
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, gi), xi) in da.iter_mut().zip(g).zip(x) {
                    *d += gi / xi;
                }
            }
        }
        Op::SoftmaxRows(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((drow, grow), yrow) in da.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                    let s: f64 = grow.iter().zip(yrow).map(|(gi, yi)| gi * yi).sum();
                    for ((d, gi), yi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += yi * (gi - s);
                    }
                }
            }
        }
        Op::LogSoftmaxRows(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((drow, grow), yrow) in da.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                    let s: f64 = grow.iter().sum();
                    for ((d, gi), yi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += gi - yi.exp() * s;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            if let Some(db) = slot(nodes, grads, *beta) {
                for row in g.chunks(cols) {
                    axpy(db, row, 1.0);
                }
            }
            if let Some(dg) = slot(nodes, grads, *gamma) {
                for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                    for ((d, gi), hi) in dg.iter_mut().zip(grow).zip(hrow) {
                        *d += gi * hi;
                    }
                }
            }
            let gam = &nodes[*gamma].value;
            if let Some(dx) = slot(nodes, grads, *x) {
                let c = cols as f64;
                let mut dh = vec![0.0; cols];
                for i in 0..rows {
                    let grow = &g[i * cols..(i + 1) * cols];
                    let hrow = &xhat[i * cols..(i + 1) * cols];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..cols {
                        dh[j] = grow[j] * gam[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * hrow[j];
                    }
                    mean_dh /= c;
                    mean_dh_h /= c;
                    let drow = &mut dx[i * cols..(i + 1) * cols];
                    for j in 0..cols {
                        drow[j] += inv_std[i] * (dh[j] - mean_dh - hrow[j] * mean_dh_h);
                    }
                }
            }
        }
        Op::MaxPoolSegments { x, argmax } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for (k, (&src, gi)) in argmax.iter().zip(g).enumerate() {
                    dx[src * cols + k % cols] += gi;
                }
            }
        }
        Op::ConcatCols(ids) => {
            let mut off = 0;
            for &src in ids {
                let w = nodes[src].cols;
                if let Some(d) = slot(nodes, grads, src) {
                    for i in 0..rows {
                        axpy(&mut d[i * w..(i + 1) * w], &g[i * cols + off..i * cols + off + w], 1.0);
                    }
                }
                off += w;
            }
        }
        Op::ConcatRows(ids) => {
            let mut off = 0;
            for &src in ids {
                let len = nodes[src].rows * cols;
                if let Some(d) = slot(nodes, grads, src) {
                    axpy(d, &g[off..off + len], 1.0);
                }
                off += len;
            }
        }
        Op::SliceCols(a, start) => {
            let src_cols = nodes[*a].cols;
            if let Some(da) = slot(nodes, grads, *a) {
                for i in 0..rows {
                    axpy(
                        &mut da[i * src_cols + start..i * src_cols + start + cols],
                        &g[i * cols..(i + 1) * cols],
                        1.0,
                    );
                }
            }
        }
        Op::GatherRows(a, index) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for (r, &src) in index.iter().enumerate() {
                    axpy(&mut da[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols], 1.0);
                }
            }
        }
        Op::Transpose(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                // y is [rows, cols]; the input is [cols, rows].
                for i in 0..rows {
                    for j in 0..cols {
                        da[j * rows + i] += g[i * cols + j];
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::Mean(a) => {
            if let Some(da) = slot(nodes, grads, *a) {
                let s = g[0] / da.len() as f64;
                for d in da.iter_mut() {
                    *d += s;
                }
            }
        }
        Op::SumRows(a) => {
            let c = nodes[*a].cols;
            if let Some(da) = slot(nodes, grads, *a) {
                for (drow, gi) in da.chunks_mut(c).zip(g) {
                    for d in drow.iter_mut() {
                        *d += gi;
                    }
                }
            }
        }
        Op::Pick(a, index) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for (&src, gi) in index.iter().zip(g) {
                    da[src] += gi;
                }
            }
        }
        Op::RowNorm(a) => {
            let c = nodes[*a].cols;
            let x = &nodes[*a].value;
            if let Some(da) = slot(nodes, grads, *a) {
                for (i, (gi, yi)) in g.iter().zip(y).enumerate() {
                    if *yi > 0.0 {
                        let s = gi / yi;
                        for j in 0..c {
                            da[i * c + j] += s * x[i * c + j];
                        }
                    }
                }
            }
        }
        Op::L2NormalizeRows { x, norms, clamped } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for i in 0..rows {
                    let grow = &g[i * cols..(i + 1) * cols];
                    let yrow = &y[i * cols..(i + 1) * cols];
                    let yg: f64 = if clamped[i] {
                        0.0
                    } else {
                        grow.iter().zip(yrow).map(|(a, b)| a * b).sum()
                    };
                    for j in 0..cols {
                        dx[i * cols + j] += (grow[j] - yrow[j] * yg) / norms[i];
                    }
                }
            }
        }
        Op::QuatToRotmat(a) => {
            let qv = &nodes[*a].value;
            if let Some(da) = slot(nodes, grads, *a) {
                for i in 0..rows {
                    let (w, x, yq, z) = (qv[i * 4], qv[i * 4 + 1], qv[i * 4 + 2], qv[i * 4 + 3]);
                    let gm = &g[i * 9..i * 9 + 9];
                    let (g00, g01, g02) = (gm[0], gm[1], gm[2]);
                    let (g10, g11, g12) = (gm[3], gm[4], gm[5]);
                    let (g20, g21, g22) = (gm[6], gm[7], gm[8]);
                    da[i * 4] += 2.0 * (-z * g01 + yq * g02 + z * g10 - x * g12 - yq * g20 + x * g21);
                    da[i * 4 + 1] += 2.0
                        * (yq * g01 + z * g02 + yq * g10 - 2.0 * x * g11 - w * g12 + z * g20 + w * g21
                            - 2.0 * x * g22);
                    da[i * 4 + 2] += 2.0
                        * (-2.0 * yq * g00 + x * g01 + w * g02 + x * g10 + z * g12 - w * g20 + z * g21
                            - 2.0 * yq * g22);
                    da[i * 4 + 3] += 2.0
                        * (-2.0 * z * g00 - w * g01 + x * g02 + w * g10 - 2.0 * z * g11 + yq * g12
                            + x * g20
                            + yq * g21);
                }
            }
        }
        Op::RigidTransform {
            rot,
            trans,
            points,
            per_part,
        } => {
            let n = nodes[*rot].rows;
            if let Some(dr) = slot(nodes, grads, *rot) {
                for i in 0..n {
                    let d = &mut dr[i * 9..i * 9 + 9];
                    for p in 0..*per_part {
                        let k = (i * per_part + p) * 3;
                        for r in 0..3 {
                            let gr = g[k + r];
                            d[r * 3] += gr * points[k];
                            d[r * 3 + 1] += gr * points[k + 1];
                            d[r * 3 + 2] += gr * points[k + 2];
                        }
                    }
                }
            }
            if let Some(t) = trans {
                if let Some(dt) = slot(nodes, grads, *t) {
                    for i in 0..n {
                        for p in 0..*per_part {
                            let k = (i * per_part + p) * 3;
                            dt[i * 3] += g[k];
                            dt[i * 3 + 1] += g[k + 1];
                            dt[i * 3 + 2] += g[k + 2];
                        }
                    }
                }
            }
        }
        Op::ChamferSegments {
            a,
            b,
            seg_a,
            seg_b,
            nn_ab,
            nn_ba,
        } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let mut ga = vec![0.0; av.len()];
            let mut gb = vec![0.0; bv.len()];
            for (i, &j) in nn_ab.iter().enumerate() {
                let s = 2.0 * g[i / seg_a] / *seg_a as f64;
                for c in 0..3 {
                    let d = s * (av[i * 3 + c] - bv[j * 3 + c]);
                    ga[i * 3 + c] += d;
                    gb[j * 3 + c] -= d;
                }
            }
            for (j, &i) in nn_ba.iter().enumerate() {
                let s = 2.0 * g[j / seg_b] / *seg_b as f64;
                for c in 0..3 {
                    let d = s * (bv[j * 3 + c] - av[i * 3 + c]);
                    gb[j * 3 + c] += d;
                    ga[i * 3 + c] -= d;
                }
            }
            if let Some(da) = slot(nodes, grads, *a) {
                axpy(da, &ga, 1.0);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                axpy(db, &gb, 1.0);
            }
        }
    }
}

#[inline]
fn axpy(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}
