//! Cross-module property suites: the spectral equivalences behind the
//! preconditioner construction, checked densely on small instances.

use ieti_dg::assembly::{
    assemble_parameter_matrices, build_spaces, choose_penalty, DgConfig, Discretization,
    ExtendedSpace,
};
use ieti_dg::geometry::{quarter_annulus_multipatch, unit_square_multipatch};
use ieti_dg::ieti::*;
use ieti_dg::krylov::{pcg, FnOp, LinOp};
use ieti_dg::linalg::{general_eig_spd, kron_dense, sym_eig, DenseMatrix};
use ieti_dg::oracle::{assemble_extended_dense_slow, assemble_monolithic};
use ieti_dg::util::Rng;

fn square_disc(nx: usize, ny: usize, p: usize, r: usize) -> Discretization {
    let mp = unit_square_multipatch(nx, ny).unwrap();
    let spaces = build_spaces(&mp, &vec![(p, r); nx * ny]).unwrap();
    let delta = choose_penalty(p, None).unwrap();
    Discretization::new(mp, spaces, DgConfig::new(delta)).unwrap()
}

fn annulus_disc(na: usize, nr: usize, p: usize, r: usize) -> Discretization {
    let mp = quarter_annulus_multipatch(na, nr, 1.0, 2.0).unwrap();
    let spaces = build_spaces(&mp, &vec![(p, r); na * nr]).unwrap();
    let delta = choose_penalty(p, None).unwrap();
    Discretization::new(mp, spaces, DgConfig::new(delta)).unwrap()
}

fn source(x: [f64; 2]) -> f64 {
    (3.0 * x[0] - x[1]).cos()
}

/// Generalized spectrum bounds of (X, Y), both SPD.
fn gen_spectrum_bounds(x: &DenseMatrix, y: &DenseMatrix) -> (f64, f64) {
    let (w, _) = general_eig_spd(x, y).unwrap();
    (w[0], *w.last().unwrap())
}

#[test]
fn patchwise_equivalence_a_vs_d() {
    // A^(k) and D^(k) are spectrally equivalent on the delta block, with a
    // ratio that does not grow between refinement levels.
    for p in [1usize, 2] {
        let mut ratios = Vec::new();
        for r in [1usize, 2] {
            let disc = square_disc(2, 2, p, r);
            let asm = assemble_ieti(&disc, &source, 1).unwrap();
            let mut worst: f64 = 0.0;
            for (k, pb) in asm.patches.iter().enumerate() {
                // D restricted to delta
                let delta = pb.part.delta_dofs();
                let sys = ieti_dg::assembly::assemble_local(&disc, &asm.exts[k], &source).unwrap();
                let d_dd = sys.d.submatrix(&delta, &delta).to_dense();
                let a_dd = pb.a_dd.to_dense();
                let (lo, hi) = gen_spectrum_bounds(&a_dd, &d_dd);
                assert!(lo > 0.0, "A not positive on delta, patch {k}");
                worst = worst.max(hi / lo);
            }
            assert!(
                worst <= 50.0,
                "p={p} r={r}: spectral ratio {worst:.2} exceeds 50"
            );
            ratios.push(worst);
        }
        assert!(
            ratios[1] <= ratios[0] * 1.10,
            "p={p}: equivalence ratio grew from {} to {}",
            ratios[0],
            ratios[1]
        );
    }
}

#[test]
fn orthogonal_splitting_lemma() {
    // The two surrogate subspaces are orthogonal in the parameter-domain
    // dG scalar product.
    for disc in [square_disc(2, 2, 2, 2), annulus_disc(2, 1, 2, 1)] {
        let n = disc.n_patches();
        let mut rng = Rng::new(101);
        for k in 0..n {
            let ext = ExtendedSpace::build(&disc, k);
            if ext.traces.is_empty() {
                continue;
            }
            let pm = assemble_parameter_matrices(&disc, &ext);
            let dhat = pm.dhat.to_dense();
            // E1: patch coefficients -> extended (projected traces).
            let projections: Vec<_> = ext
                .traces
                .iter()
                .map(|b| ieti_dg::assembly::build_edge_projection(&disc, &ext, b).unwrap())
                .collect();
            let embed1 = |c: &[f64]| -> Vec<f64> {
                let mut v = vec![0.0; ext.n_ext];
                v[..ext.n_patch].copy_from_slice(c);
                for (bi, block) in ext.traces.iter().enumerate() {
                    let own = ext.edge_trace(block.side);
                    let own_coef: Vec<f64> = (0..own.n).map(|a| c[ext.edge_dof(&own, a)]).collect();
                    let tr = projections[bi].project(&own_coef);
                    for (a, val) in tr.iter().enumerate() {
                        v[block.offset + a] = *val;
                    }
                }
                v
            };
            let n_trace: usize = ext.traces.iter().map(|b| b.n()).sum();
            let embed2 = |t: &[f64]| -> Vec<f64> {
                let mut v = vec![0.0; ext.n_ext];
                v[ext.n_patch..].copy_from_slice(t);
                v
            };
            let energy = |v: &[f64]| -> f64 {
                let mut dv = vec![0.0; v.len()];
                dhat.matvec(v, &mut dv);
                v.iter().zip(dv.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            for _ in 0..100 {
                let c = rng.vec_signed(ext.n_patch);
                let t = rng.vec_signed(n_trace);
                let v1 = embed1(&c);
                let v2 = embed2(&t);
                let mut dv2 = vec![0.0; ext.n_ext];
                dhat.matvec(&v2, &mut dv2);
                let cross: f64 = v1.iter().zip(dv2.iter()).map(|(a, b)| a * b).sum();
                let n1 = energy(&v1).max(0.0).sqrt();
                let n2 = energy(&v2).max(0.0).sqrt();
                assert!(
                    cross.abs() <= 1e-11 * n1 * n2,
                    "patch {k}: cross product {cross:.3e} vs norms {n1:.3e}, {n2:.3e}"
                );
            }
        }
    }
}

#[test]
fn d_equivalence_lemma() {
    // D1 hat + M hat is spectrally equivalent to D1 tilde, uniformly over
    // the refinement levels.
    for p in [1usize, 2] {
        let mut worst_per_r = Vec::new();
        for r in [1usize, 2] {
            let disc = square_disc(3, 3, p, r);
            let mut worst: f64 = 0.0;
            for k in 0..9 {
                let ext = ExtendedSpace::build(&disc, k);
                let pm = assemble_parameter_matrices(&disc, &ext);
                let dhat = pm.dhat.to_dense();
                let projections: Vec<_> = ext
                    .traces
                    .iter()
                    .map(|b| ieti_dg::assembly::build_edge_projection(&disc, &ext, b).unwrap())
                    .collect();
                // E1 as a dense matrix on patch coefficients.
                let np = ext.n_patch;
                let mut e1 = DenseMatrix::zeros(ext.n_ext, np);
                for j in 0..np {
                    let mut c = vec![0.0; np];
                    c[j] = 1.0;
                    let mut v = vec![0.0; ext.n_ext];
                    v[..np].copy_from_slice(&c);
                    for (bi, block) in ext.traces.iter().enumerate() {
                        let own = ext.edge_trace(block.side);
                        let own_coef: Vec<f64> =
                            (0..own.n).map(|a| c[ext.edge_dof(&own, a)]).collect();
                        let tr = projections[bi].project(&own_coef);
                        for (a, val) in tr.iter().enumerate() {
                            v[block.offset + a] = *val;
                        }
                    }
                    e1.set_column(j, &v);
                }
                // D1 hat = E1^T Dhat E1, restricted mass = M1 (x) M2.
                let d1_hat = e1.transpose().matmul(&dhat).matmul(&e1);
                let mut lhs = d1_hat;
                lhs.add_scaled(&kron_dense(&pm.m1, &pm.m2), 1.0);
                lhs.symmetrize();
                let d1_tilde = pm.d1_dense();
                let (lo, hi) = gen_spectrum_bounds(&lhs, &d1_tilde);
                assert!(lo > 0.0);
                worst = worst.max(hi / lo);
            }
            assert!(worst <= 100.0, "p={p} r={r}: ratio {worst:.2}");
            worst_per_r.push(worst);
        }
        assert!(
            worst_per_r[1] <= worst_per_r[0].max(1.0) * 1.5,
            "p={p}: D-equivalence ratio degraded sharply: {worst_per_r:?}"
        );
    }
}

#[test]
fn assembler_matches_independent_slow_path() {
    // Random extended vectors: the quadratic form of the sparse assembler
    // agrees with the dense per-element slow path to 1e-12 relative.
    let mut rng = Rng::new(77);
    for disc in [
        square_disc(2, 1, 1, 1),
        square_disc(2, 2, 2, 1),
        annulus_disc(2, 1, 2, 1),
    ] {
        for k in 0..disc.n_patches() {
            let ext = ExtendedSpace::build(&disc, k);
            let sys = ieti_dg::assembly::assemble_local(&disc, &ext, &source).unwrap();
            let slow = assemble_extended_dense_slow(&disc, &ext);
            for _ in 0..5 {
                let v = rng.vec_signed(ext.n_ext);
                let mut av = vec![0.0; ext.n_ext];
                sys.a.matvec(&v, &mut av);
                let fast: f64 = v.iter().zip(av.iter()).map(|(a, b)| a * b).sum();
                let mut sv = vec![0.0; ext.n_ext];
                slow.matvec(&v, &mut sv);
                let slow_e: f64 = v.iter().zip(sv.iter()).map(|(a, b)| a * b).sum();
                assert!(
                    (fast - slow_e).abs() <= 1e-12 * slow_e.abs().max(1.0),
                    "patch {k}: {fast} vs {slow_e}"
                );
            }
        }
    }
}

#[test]
fn coercivity_with_default_penalty() {
    // With the default penalty, the local delta blocks and the monolithic
    // dG matrix are positive definite on the r <= 2 configurations.
    for p in [1usize, 2, 3] {
        for r in [0usize, 1, 2] {
            let disc = square_disc(2, 2, p, r);
            let asm = assemble_ieti(&disc, &source, 1).unwrap();
            for (k, pb) in asm.patches.iter().enumerate() {
                if pb.part.n_delta() == 0 {
                    continue;
                }
                let (w, _) = sym_eig(&pb.a_dd.to_dense()).unwrap();
                assert!(w[0] > 0.0, "p={p} r={r} patch {k}: A_dd min eig {}", w[0]);
            }
            let mono = assemble_monolithic(&disc, &source);
            let (w, _) = sym_eig(&mono.a).unwrap();
            assert!(w[0] > 0.0, "p={p} r={r}: monolithic min eig {}", w[0]);
        }
    }
}

#[test]
fn local_preconditioner_spectrum_matches_pcg_estimate() {
    // Dense spectrum of P A_dd vs the PCG Lanczos estimate, within 5%.
    let disc = square_disc(2, 1, 2, 2);
    let asm = assemble_ieti(&disc, &source, 1).unwrap();
    for k in 0..2 {
        let lp =
            build_local_preconditioner(&disc, &asm.exts[k], &asm.patches[k].part, &asm.params[k])
                .unwrap();
        let pb = &asm.patches[k];
        let n = pb.part.n_delta();
        // dense P
        let mut pdense = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = lp.apply(&e).unwrap();
            pdense.set_column(j, &col);
        }
        pdense.symmetrize();
        let a_dd = pb.a_dd.to_dense();
        // spectrum of P A via L^T A L with P = L L^T
        let chol = pdense.cholesky().unwrap();
        let l = chol.l();
        let sym = l.transpose().matmul(&a_dd).matmul(l);
        let (w, _) = sym_eig(&sym).unwrap();
        let kappa_dense = w.last().unwrap() / w[0];
        let prec = FnOp::new(n, |x: &[f64], y: &mut [f64]| {
            let out = lp.apply(x).unwrap();
            y.copy_from_slice(&out);
        });
        let mut rng = Rng::new(42 + k as u64);
        let b = rng.vec_signed(n);
        let (_, rep) = pcg(&pb.a_dd, &prec, &b, 1e-12, 10 * n).unwrap();
        let kappa_pcg = rep.kappa.unwrap();
        assert!(
            (kappa_dense - kappa_pcg).abs() / kappa_dense <= 0.05,
            "patch {k}: dense {kappa_dense:.4} vs PCG {kappa_pcg:.4}"
        );
        // symmetry of P on random pairs
        for _ in 0..100 {
            let x = rng.vec_signed(n);
            let y = rng.vec_signed(n);
            let px = lp.apply(&x).unwrap();
            let py = lp.apply(&y).unwrap();
            let xpy: f64 = x.iter().zip(py.iter()).map(|(a, b)| a * b).sum();
            let ypx: f64 = y.iter().zip(px.iter()).map(|(a, b)| a * b).sum();
            assert!(
                (xpy - ypx).abs() <= 1e-11 * xpy.abs().max(1.0),
                "P not symmetric: {xpy} vs {ypx}"
            );
        }
    }
}

#[test]
fn dirichlet_interior_block_is_kronecker() {
    // The interior block of the parameter-domain matrix equals the
    // Kronecker sum of the strictly interior univariate factors, which is
    // what the fast-diagonalization inner solver factorizes.
    let disc = square_disc(2, 2, 2, 2);
    for k in 0..4 {
        let ext = ExtendedSpace::build(&disc, k);
        let part = classify_dofs(&disc, &ext);
        let pm = assemble_parameter_matrices(&disc, &ext);
        let interior = |dir: usize| {
            let kv = ext.basis.kv(dir);
            let (m, kk) = kv.univariate_matrices();
            let idx: Vec<usize> = (1..kv.num_basis() - 1).collect();
            (m.submatrix(&idx, &idx), kk.submatrix(&idx, &idx))
        };
        let (m1, k1) = interior(0);
        let (m2, k2) = interior(1);
        let mut expect = kron_dense(&k1, &m2);
        expect.add_scaled(&kron_dense(&m1, &k2), 1.0);
        let d_ii = pm.dhat.submatrix(&part.i_dofs, &part.i_dofs).to_dense();
        assert_eq!(d_ii.rows(), expect.rows());
        for i in 0..d_ii.rows() {
            for j in 0..d_ii.cols() {
                assert!(
                    (d_ii[(i, j)] - expect[(i, j)]).abs() <= 1e-12 * expect.max_abs(),
                    "patch {k} entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn multiplicity_scaling_integer_recount() {
    let disc = square_disc(2, 2, 2, 2);
    let asm = assemble_ieti(&disc, &source, 1).unwrap();
    let sd = build_scaled_dirichlet(&asm, false).unwrap();
    // recount from the jump rows
    let mut counts: Vec<Vec<usize>> = asm
        .patches
        .iter()
        .map(|p| vec![0usize; p.part.n_gamma()])
        .collect();
    for &((kp, gp), (km, gm)) in &asm.rows_gamma {
        counts[kp][gp] += 1;
        counts[km][gm] += 1;
    }
    for (k, sk) in sd.scaling.iter().enumerate() {
        for (g, &s) in sk.iter().enumerate() {
            assert_eq!(s, 1.0 + counts[k][g] as f64, "patch {k} gamma dof {g}");
            assert_eq!(s.fract(), 0.0);
            assert!(s >= 1.0);
        }
    }
}

#[test]
fn prec_equivalence_lemma_exact_vs_surrogate_dirichlet() {
    // M_sD (exact Schur) and M_sD hat (parameter-domain Schur with FD
    // interior solves) are spectrally equivalent, with a non-growing ratio
    // between refinement levels.
    let mut ratios = Vec::new();
    for r in [1usize, 2] {
        let disc = square_disc(2, 1, 2, r);
        let asm = assemble_ieti(&disc, &source, 1).unwrap();
        let exact = build_scaled_dirichlet(&asm, true).unwrap();
        let surrogate = build_scaled_dirichlet(&asm, false).unwrap();
        let nl = asm.n_lambda();
        let mut m_exact = DenseMatrix::zeros(nl, nl);
        let mut m_sur = DenseMatrix::zeros(nl, nl);
        let mut e = vec![0.0; nl];
        for j in 0..nl {
            e.fill(0.0);
            e[j] = 1.0;
            m_exact.set_column(j, &exact.apply(&e));
            m_sur.set_column(j, &surrogate.apply(&e));
        }
        m_exact.symmetrize();
        m_sur.symmetrize();
        let (lo, hi) = gen_spectrum_bounds(&m_exact, &m_sur);
        assert!(lo > 0.0, "r={r}: exact scaled Dirichlet not SPD");
        let ratio = hi / lo;
        assert!(ratio <= 50.0, "r={r}: equivalence ratio {ratio:.2}");
        ratios.push(ratio);
    }
    assert!(
        ratios[1] <= ratios[0] * 1.10,
        "equivalence ratio grew: {ratios:?}"
    );
}

#[test]
fn schur_complement_single_interior_patch() {
    // Surrogate patch Schur complement vs an explicit dense Schur of the
    // parameter-domain matrix.
    let disc = square_disc(2, 1, 2, 1);
    let asm = assemble_ieti(&disc, &source, 1).unwrap();
    let sd = build_scaled_dirichlet(&asm, false).unwrap();
    for (k, pb) in asm.patches.iter().enumerate() {
        let part = &pb.part;
        let gamma = part.gamma_dofs();
        let dhat = asm.params[k].dhat.to_dense();
        let d_ii = dhat.submatrix(&part.i_dofs, &part.i_dofs);
        let d_ig = dhat.submatrix(&part.i_dofs, &gamma);
        let d_gi = dhat.submatrix(&gamma, &part.i_dofs);
        let d_gg = dhat.submatrix(&gamma, &gamma);
        let mut expect = d_gg.clone();
        if !part.i_dofs.is_empty() {
            let inv = d_ii.inverse().unwrap();
            let t = d_gi.matmul(&inv).matmul(&d_ig);
            expect.add_scaled(&t, -1.0);
        }
        let got = sd.patches[k].dense();
        for i in 0..expect.rows() {
            for j in 0..expect.cols() {
                assert!(
                    (got[(i, j)] - expect[(i, j)]).abs() <= 1e-11 * expect.max_abs(),
                    "patch {k} Schur entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn solution_trace_continuity_and_multiplier_consistency() {
    // After recovery the patch traces agree with the artificial copies in
    // L2 on every interface, at the solver-tolerance level scaled by the
    // dG norm of the solution, and the algebraic constraint residual is at
    // the tolerance level.
    let disc = square_disc(2, 2, 2, 2);
    let opts = SolveOptions {
        eps: 1e-8,
        ..SolveOptions::new(Variant::Mfd)
    };
    let sol = solve_ieti(&disc, &ieti_dg::driver::manufactured_source, &opts).unwrap();
    let mono = assemble_monolithic(&disc, &ieti_dg::driver::manufactured_source);
    let u = mono.concat(&sol.patch_coeffs);
    let unorm = mono.dg_norm(&u);
    assert!(
        sol.constraint_residual <= 1e-6 * unorm.max(1.0),
        "constraint residual {} too large",
        sol.constraint_residual
    );
    // Functional trace agreement: u^(k)|_edge vs the artificial copy held
    // by the neighbor.
    for (k, ext) in (0..4).map(|k| (k, ExtendedSpace::build(&disc, k))) {
        for block in &ext.traces {
            let l = block.neighbor;
            let nb_ext = ExtendedSpace::build(&disc, l);
            let own_nb = nb_ext.edge_trace(block.neighbor_side);
            let mut err2 = 0.0;
            let nq = 200;
            for q in 0..=nq {
                let s = q as f64 / nq as f64;
                let w = if q == 0 || q == nq { 0.5 } else { 1.0 } / nq as f64;
                // artificial copy held by patch k at its edge coordinate s
                let mut v_art = 0.0;
                for (a, va) in block.eval(s) {
                    v_art += sol.ext_coeffs[k][block.offset + a] * va;
                }
                // neighbor's own trace at the matching coordinate
                let t = block.to_neighbor_coord(s);
                let mut v_own = 0.0;
                let own_kv = nb_ext.basis.kv(block.neighbor_side.parallel_dir());
                let (first, vals, _) = own_kv.eval_basis(t).unwrap();
                let lo = usize::from(own_nb.drop_first);
                let hi = own_kv.num_basis() - usize::from(own_nb.drop_last);
                for (j, &v) in vals.iter().enumerate() {
                    let idx = first + j;
                    if idx >= lo && idx < hi {
                        v_own += sol.patch_coeffs[l][nb_ext.edge_dof(&own_nb, idx - lo)] * v;
                    }
                }
                err2 += w * (v_art - v_own) * (v_art - v_own);
            }
            assert!(
                err2.sqrt() <= 1e-6 * unorm.max(1.0),
                "patch {k} interface with {l}: trace disagreement {:.3e}",
                err2.sqrt()
            );
        }
    }
}

#[test]
fn exact_local_solver_reproduces_monolithic() {
    // Spot-check beyond the acceptance grid: an annulus instance.
    let disc = annulus_disc(2, 2, 2, 1);
    let mono = assemble_monolithic(&disc, &source);
    let direct = mono.solve(&mono.f);
    let opts = SolveOptions {
        eps: 1e-10,
        ..SolveOptions::new(Variant::Mlu)
    };
    let sol = solve_ieti(&disc, &source, &opts).unwrap();
    let mine = mono.concat(&sol.patch_coeffs);
    let diff: Vec<f64> = mine.iter().zip(direct.iter()).map(|(a, b)| a - b).collect();
    let err = mono.dg_norm(&diff);
    let scale = mono.dg_norm(&direct);
    assert!(err <= 1e-7 * scale.max(1.0), "dG-norm gap {err:.3e}");
}

#[test]
fn variants_agree_in_dg_norm() {
    // Exact-solver and inexact-solver variants produce the same discrete
    // solution up to 10x the outer tolerance in the dG norm, and the exact
    // variants need strictly fewer iterations than the inexact ones.
    let eps = 1e-8;
    let disc = square_disc(2, 2, 2, 2);
    let mono = assemble_monolithic(&disc, &ieti_dg::driver::manufactured_source);
    let mut sols = Vec::new();
    for variant in Variant::all() {
        let opts = SolveOptions {
            eps,
            ..SolveOptions::new(variant)
        };
        let sol = solve_ieti(&disc, &ieti_dg::driver::manufactured_source, &opts).unwrap();
        sols.push((variant, sol));
    }
    let scale = {
        let u = mono.concat(&sols[0].1.patch_coeffs);
        mono.dg_norm(&u).max(1.0)
    };
    for i in 0..sols.len() {
        for j in (i + 1)..sols.len() {
            let a = mono.concat(&sols[i].1.patch_coeffs);
            let b = mono.concat(&sols[j].1.patch_coeffs);
            let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
            let gap = mono.dg_norm(&diff);
            assert!(
                gap <= 10.0 * eps * scale,
                "{} vs {}: dG gap {gap:.3e} exceeds 10 eps",
                sols[i].0,
                sols[j].0
            );
        }
    }
    let it = |v: Variant| {
        sols.iter()
            .find(|(w, _)| *w == v)
            .unwrap()
            .1
            .report
            .iterations
    };
    assert!(
        it(Variant::Mlu) < it(Variant::Mfd),
        "exact local solves must need fewer iterations"
    );
}

#[test]
fn mixed_discretization_assembles_and_converges() {
    // Red patches at degree p+1 and grey patches refined once more:
    // genuinely non-matching interfaces where neither trace space contains
    // the other. Assembly must succeed and the solvers converge to the
    // same solution.
    let mut cfg = ieti_dg::driver::ExperimentConfig::new(
        2,
        2,
        ieti_dg::driver::Layout::Square { nx: 2, ny: 2 },
        Variant::Mfd,
    );
    cfg.mixed_degree = true;
    cfg.mixed_refine = true;
    let disc = ieti_dg::driver::build_discretization(&cfg).unwrap();
    // Confirm at least one interface is non-matching in both senses.
    let degrees: Vec<usize> = disc.spaces.iter().map(|s| s.kv1.degree()).collect();
    let sizes: Vec<usize> = disc.spaces.iter().map(|s| s.kv1.num_elements()).collect();
    assert!(degrees.iter().any(|&d| d != degrees[0]));
    assert!(sizes.iter().any(|&n| n != sizes[0]));

    let mono = assemble_monolithic(&disc, &ieti_dg::driver::manufactured_source);
    let direct = mono.solve(&mono.f);
    let scale = mono.dg_norm(&direct).max(1.0);
    for variant in [Variant::Mfd, Variant::Mlu, Variant::Cglu] {
        let opts = SolveOptions {
            eps: 1e-8,
            ..SolveOptions::new(variant)
        };
        let sol = solve_ieti(&disc, &ieti_dg::driver::manufactured_source, &opts).unwrap();
        let mine = mono.concat(&sol.patch_coeffs);
        let diff: Vec<f64> = mine.iter().zip(direct.iter()).map(|(a, b)| a - b).collect();
        let gap = mono.dg_norm(&diff);
        assert!(
            gap <= 1e-6 * scale,
            "{variant} on the mixed problem: dG gap {gap:.3e}"
        );
    }
}

#[test]
fn minres_lanczos_estimate_matches_dense_spectrum() {
    // With a generic right-hand side, the MINRES Lanczos estimate of the
    // preconditioned saddle operator's condition number agrees with the
    // dense oracle within 10%.
    for r in [1usize, 2] {
        let disc = square_disc(2, 2, 2, r);
        let asm = assemble_ieti(&disc, &source, 1).unwrap();
        let local: Vec<LocalSolve> = (0..4)
            .map(|k| {
                LocalSolve::Inexact(
                    build_local_preconditioner(
                        &disc,
                        &asm.exts[k],
                        &asm.patches[k].part,
                        &asm.params[k],
                    )
                    .unwrap(),
                )
            })
            .collect();
        let dirichlet = build_scaled_dirichlet(&asm, false).unwrap();
        let primal = build_primal_basis(
            &asm,
            &local,
            PrimalMode::Pcg {
                eps_c: 1e-12,
                maxit: 2000,
            },
        )
        .unwrap();
        let op = SaddleOperator {
            asm: &asm,
            primal: &primal,
        };
        let prec = SaddlePreconditioner::new(&asm, &primal, &local, &dirichlet, 1);
        let n = op.dim();
        let mut a = DenseMatrix::zeros(n, n);
        let mut pmat = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            op.apply(&e, &mut col);
            a.set_column(j, &col);
            prec.apply(&e, &mut col);
            pmat.set_column(j, &col);
        }
        a.symmetrize();
        pmat.symmetrize();
        let chol = pmat.cholesky().expect("saddle preconditioner SPD");
        let l = chol.l();
        let sym = l.transpose().matmul(&a).matmul(l);
        let (w, _) = sym_eig(&sym).unwrap();
        let amax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amin = w.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let kappa_dense = amax / amin;
        // The estimate is taken at the solver's working tolerance: with an
        // indefinite operator, running far past convergence lets interior
        // Ritz values wander into the spectral gap around zero and spoil
        // the |lambda|_min estimate.
        let mut rng = Rng::new(31);
        let b = rng.vec_signed(n);
        let (_, rep) = ieti_dg::krylov::minres(&op, &prec, &b, 1e-8, 5000).unwrap();
        let kappa_est = rep.kappa.unwrap();
        assert!(
            (kappa_est - kappa_dense).abs() / kappa_dense <= 0.10,
            "r={r}: estimate {kappa_est:.4} vs dense {kappa_dense:.4}"
        );
    }
}
