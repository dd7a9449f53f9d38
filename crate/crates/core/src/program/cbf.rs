//! Export in the Conic Benchmark Format (CBF, version 3).
//!
//! CBF objectives are linear, so programs with quadratic terms are written
//! through their conic-linear rewrite. Rows map to `L=` and `L-` blocks,
//! each cone to a `Q` block in standard (non-rotated) form.

use std::io::{self, Write};

use super::ConicProgram;
use crate::Scalar;

pub fn write_cbf<T: Scalar, W: Write>(prog: &ConicProgram<T>, mut w: W) -> io::Result<()> {
    let linear_form;
    let prog = if prog.quadratic().is_empty() {
        prog
    } else {
        linear_form = prog.to_conic_linear();
        &linear_form
    };
    let n = prog.n_vars();
    let mut a: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<(usize, f64)> = Vec::new();
    let mut blocks: Vec<(&str, usize)> = Vec::new();
    let mut m = 0usize;

    // Ax + b ∈ K with K = L= for equalities and L- for `≤` rows
    for (rows, tag) in [(prog.eq_rows(), "L="), (prog.ineq_rows(), "L-")] {
        if rows.is_empty() {
            continue;
        }
        for row in rows {
            for &(j, c) in &row.terms {
                a.push((m, j, c.as_f64()));
            }
            if row.rhs != T::zero() {
                b.push((m, -row.rhs.as_f64()));
            }
            m += 1;
        }
        blocks.push((tag, rows.len()));
    }
    for cone in prog.cones() {
        let entries = cone.standard_entries();
        for e in &entries {
            for &(j, c) in &e.terms {
                a.push((m, j, c.as_f64()));
            }
            if e.constant != T::zero() {
                b.push((m, e.constant.as_f64()));
            }
            m += 1;
        }
        blocks.push(("Q", entries.len()));
    }

    writeln!(w, "VER\n3\n")?;
    writeln!(w, "OBJSENSE\nMIN\n")?;
    writeln!(w, "VAR\n{n} 1\nF {n}\n")?;
    writeln!(w, "CON\n{m} {}", blocks.len())?;
    for (tag, len) in &blocks {
        writeln!(w, "{tag} {len}")?;
    }
    writeln!(w)?;
    let obj: Vec<(usize, f64)> = prog
        .linear()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != T::zero())
        .map(|(j, c)| (j, c.as_f64()))
        .collect();
    if !obj.is_empty() {
        writeln!(w, "OBJACOORD\n{}", obj.len())?;
        for (j, c) in obj {
            writeln!(w, "{j} {c:e}")?;
        }
        writeln!(w)?;
    }
    if prog.constant() != T::zero() {
        writeln!(w, "OBJBCOORD\n{:e}\n", prog.constant().as_f64())?;
    }
    if !a.is_empty() {
        writeln!(w, "ACOORD\n{}", a.len())?;
        for (i, j, c) in a {
            writeln!(w, "{i} {j} {c:e}")?;
        }
        writeln!(w)?;
    }
    if !b.is_empty() {
        writeln!(w, "BCOORD\n{}", b.len())?;
        for (i, c) in b {
            writeln!(w, "{i} {c:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
