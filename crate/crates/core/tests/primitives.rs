use mvnmt_core::gradcheck::check_gradient;
use mvnmt_core::{Graph, NodeId, Result, Tensor};
use proptest::prelude::*;

const REL: f64 = 1e-4;
const ABS: f64 = 1e-8;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

/// Weighted sum so that every output element gets a distinct upstream gradient.
fn reduce(g: &mut Graph, y: NodeId, weights: &[f64]) -> NodeId {
    let shape = g.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = g.constant(Tensor::new(shape, weights[..n].to_vec()).unwrap());
    let prod = g.mul(y, w).unwrap();
    g.sum(prod).unwrap()
}

fn check(build: impl FnOnce(&mut Graph) -> Result<NodeId>, weights: &[f64]) -> std::result::Result<(), TestCaseError> {
    let mut g = Graph::new();
    let y = build(&mut g).unwrap();
    let loss = reduce(&mut g, y, weights);
    let report = check_gradient(&mut g, loss, 1e-5).unwrap();
    prop_assert!(report.passes(REL, ABS), "{report}");
    Ok(())
}

fn mat(g: &mut Graph, name: &str, r: usize, c: usize, v: &[f64]) -> NodeId {
    g.param(name, &Tensor::matrix(r, c, v[..r * c].to_vec()).unwrap())
}

fn vec_p(g: &mut Graph, name: &str, v: &[f64]) -> NodeId {
    g.param(name, &Tensor::vector(v.to_vec()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matmul_matrix_and_vector(a in values(12), b in values(12), x in values(4), w in values(12)) {
        check(|g| { let a = mat(g, "a", 3, 4, &a); let b = mat(g, "b", 4, 3, &b); g.matmul(a, b) }, &w)?;
        check(|g| { let a = mat(g, "a", 3, 4, &a); let x = vec_p(g, "x", &x); g.matmul(a, x) }, &w)?;
    }

    #[test]
    fn transpose_and_row_bias(a in values(6), b in values(3), w in values(6)) {
        check(|g| { let a = mat(g, "a", 2, 3, &a); g.transpose(a) }, &w)?;
        check(|g| { let a = mat(g, "a", 2, 3, &a); let b = vec_p(g, "b", &b); g.add_row_bias(a, b) }, &w)?;
    }

    #[test]
    fn elementwise_binary(a in values(5), b in values(5), w in values(5)) {
        check(|g| { let x = vec_p(g, "a", &a); let y = vec_p(g, "b", &b); g.add(x, y) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); let y = vec_p(g, "b", &b); g.sub(x, y) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); let y = vec_p(g, "b", &b); g.mul(x, y) }, &w)?;
        // the same node on both sides accumulates its gradient twice
        check(|g| { let x = vec_p(g, "a", &a); g.mul(x, x) }, &w)?;
    }

    #[test]
    fn elementwise_unary(a in values(6), w in values(6), s in -2.0..2.0f64) {
        check(|g| { let x = vec_p(g, "a", &a); g.tanh(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.sigmoid(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.exp(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.expm1(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.square(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.scale(x, s) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.add_scalar(x, s) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.one_minus(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.clamp(x, -1.0, 1.0) }, &w)?;
    }

    #[test]
    fn softmax_family(a in values(8), w in values(8)) {
        check(|g| { let x = vec_p(g, "a", &a); g.softmax(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.log_softmax(x) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.softmax(x) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.log_softmax(x) }, &w)?;
    }

    #[test]
    fn reductions_and_reshaping(a in values(8), b in values(4), w in values(20)) {
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.sum(x) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.mean_rows(x) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); let y = vec_p(g, "b", &b); g.concat(&[x, y, x]) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); let y = vec_p(g, "b", &b); g.concat_rows(&[y, x]) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.slice(x, 2, 5) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.row(x, 1) }, &w)?;
        check(|g| { let x = mat(g, "a", 2, 4, &a); g.column(x, 3) }, &w)?;
        check(|g| { let x = vec_p(g, "a", &a); g.pick(x, 6) }, &w)?;
    }

    #[test]
    fn softmax_rows_are_distributions(a in prop::collection::vec(-50.0..50.0f64, 12)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(3, 4, a).unwrap());
        let p = g.softmax(x).unwrap();
        let t = g.value(p);
        for r in 0..3 {
            prop_assert!(t.row(r).iter().all(|&v| v >= 0.0));
            prop_assert!((t.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn gradient_ignores_construction_order(a in values(4), b in values(4), c in values(4)) {
        // (a * b + c) . tanh(a), built in two different orders
        let grads = |flip: bool| {
            let mut g = Graph::new();
            let (x, y, z) = if flip {
                let z = vec_p(&mut g, "c", &c);
                let y = vec_p(&mut g, "b", &b);
                (vec_p(&mut g, "a", &a), y, z)
            } else {
                let x = vec_p(&mut g, "a", &a);
                let y = vec_p(&mut g, "b", &b);
                (x, y, vec_p(&mut g, "c", &c))
            };
            let (t, prod) = if flip {
                let t = g.tanh(x).unwrap();
                (t, g.mul(y, x).unwrap())
            } else {
                let prod = g.mul(x, y).unwrap();
                (g.tanh(x).unwrap(), prod)
            };
            let s = if flip { g.add(z, prod).unwrap() } else { g.add(prod, z).unwrap() };
            let m = g.mul(s, t).unwrap();
            let loss = g.sum(m).unwrap();
            g.backward(loss).unwrap()
        };
        let (g1, g2) = (grads(false), grads(true));
        for k in ["a", "b", "c"] {
            prop_assert!(g1[k].max_abs_diff(&g2[k]) <= 1e-12);
        }
    }
}
