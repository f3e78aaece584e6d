mod common;

use common::{random_dag, random_expr, random_queueing, random_table, random_theta, Rng};
use proptest::prelude::*;
use stochnet::algebra::{canonicalize, order_statistic_of_vars, Expr, OpKind, VarId};
use stochnet::ipa::ipa_queueing_measures;
use stochnet::networks::{
    simulate_activity, simulate_queueing, simulate_reliability, DagKind, QueueingNetwork, Routing, RoutingTable,
    Status,
};
use stochnet::variates::{check_dclass, MeasureKind, Replication, ThetaBox};

/// Value and the smallest gap between the two largest (max) or two
/// smallest (min) operands anywhere in the tree.
fn value_and_gap(e: &Expr, x: &[f64]) -> (f64, f64) {
    match e {
        Expr::Var(v) => (x[v.index()], f64::INFINITY),
        Expr::Const(c) => (*c, f64::INFINITY),
        Expr::Op(node) => {
            let parts: Vec<(f64, f64)> = node.children().iter().map(|c| value_and_gap(c, x)).collect();
            let mut gap = parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let mut vals: Vec<f64> = parts.iter().map(|p| p.0).collect();
            let total: f64 = vals.iter().sum();
            vals.sort_by(f64::total_cmp);
            let v = match node.kind() {
                OpKind::Sum => total,
                OpKind::Max => {
                    gap = gap.min(vals[vals.len() - 1] - vals[vals.len() - 2]);
                    vals[vals.len() - 1]
                }
                OpKind::Min => {
                    gap = gap.min(vals[1] - vals[0]);
                    vals[0]
                }
            };
            (v, gap)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn canonical_form_is_exact_on_integers(seed in any::<u64>(), leaves in 1usize..12) {
        let mut rng = Rng::new(seed);
        let e = random_expr(&mut rng, leaves, 3);
        let c = canonicalize(&e, 1 << 20).unwrap();
        for _ in 0..20 {
            let a: Vec<i64> = (0..3).map(|_| rng.int(-50, 50)).collect();
            let direct = e.evaluate(|v| Some(a[v.index()] as f64)).unwrap();
            prop_assert_eq!(direct, c.evaluate_int(|v| Some(a[v.index()])).unwrap() as f64);
        }
    }

    #[test]
    fn order_statistic_matches_sort(xs in prop::collection::vec(-100.0f64..100.0, 1..8)) {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let vars: Vec<VarId> = (0..xs.len() as u32).map(VarId).collect();
        for k in 1..=xs.len() {
            let v = order_statistic_of_vars(&vars, k).unwrap().evaluate(|v| Some(xs[v.index()])).unwrap();
            prop_assert_eq!(v, sorted[k - 1]);
        }
    }

    #[test]
    fn path_derivative_matches_central_difference(seed in any::<u64>(), leaves in 1usize..12) {
        let mut rng = Rng::new(seed);
        let e = random_expr(&mut rng, leaves, 4);
        let a: Vec<f64> = (0..4).map(|_| rng.range(-5.0, 5.0)).collect();
        let b: Vec<[f64; 2]> = (0..4).map(|_| [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)]).collect();
        let theta = [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)];
        let x = |t: &[f64]| -> Vec<f64> { (0..4).map(|i| a[i] + b[i][0] * t[0] + b[i][1] * t[1]).collect() };
        let x0 = x(&theta);
        let (v, gap) = value_and_gap(&e, &x0);
        prop_assume!(gap >= 1e-6);
        let (pv, g) = e.path_derivative(|v| Some(x0[v.index()]), |v| Some(b[v.index()].to_vec()), 2).unwrap();
        prop_assert_eq!(pv, v);
        let h = 1e-9;
        for k in 0..2 {
            let mut up = theta;
            let mut down = theta;
            up[k] += h;
            down[k] -= h;
            let fd = (value_and_gap(&e, &x(&up)).0 - value_and_gap(&e, &x(&down)).0) / (2.0 * h);
            let scale = fd.abs().max(g[k].abs()).max(1.0);
            prop_assert!((fd - g[k]).abs() / scale < 1e-4, "k={} fd={} g={}", k, fd, g[k]);
        }
    }

    #[test]
    fn sum_derivative_is_sum_of_children(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let kids: Vec<Expr> = (0..3).map(|_| { let n = 1 + rng.below(5); random_expr(&mut rng, n, 3) }).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.range(-5.0, 5.0)).collect();
        let d: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.range(-1.0, 1.0)]).collect();
        let pd = |e: &Expr| e.path_derivative(|v| Some(x[v.index()]), |v| Some(d[v.index()].clone()), 1).unwrap();
        let total = pd(&Expr::sum(kids.clone()));
        let parts: f64 = kids.iter().map(|k| pd(k).1[0]).sum();
        let sum_of_values: f64 = kids.iter().map(|k| pd(k).0).sum();
        prop_assert_eq!(total.1[0], parts);
        prop_assert_eq!(total.0, sum_of_values);
    }

    #[test]
    fn evaluation_is_monotone_in_every_leaf(seed in any::<u64>(), leaves in 1usize..12, bump in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let e = random_expr(&mut rng, leaves, 4);
        let x: Vec<f64> = (0..4).map(|_| rng.range(-5.0, 5.0)).collect();
        let base = e.evaluate(|v| Some(x[v.index()])).unwrap();
        for i in 0..4 {
            let mut y = x.clone();
            y[i] += bump;
            prop_assert!(e.evaluate(|v| Some(y[v.index()])).unwrap() >= base);
        }
    }

    #[test]
    fn dag_networks_are_monotone_in_durations(seed in any::<u64>(), bump in 0.0f64..2.0) {
        let mut rng = Rng::new(seed);
        for kind in [DagKind::Activity, DagKind::Reliability] {
            let net = random_dag(&mut rng, kind);
            let tau: Vec<f64> = (0..net.len()).map(|_| rng.range(0.0, 5.0)).collect();
            let (t, _) = net.node_times(&tau);
            for i in 0..net.len() {
                let mut up = tau.clone();
                up[i] += bump;
                prop_assert!(net.node_times(&up).0 >= t);
            }
        }
    }

    #[test]
    fn queueing_traces_respect_fcfs_and_conservation(seed in any::<u64>(), stochastic in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let Some(mut net) = random_queueing(&mut rng) else { return Ok(()) };
        if stochastic {
            let l = net.len();
            let p: Vec<Vec<f64>> = (0..l).map(|_| { let w: Vec<f64> = (0..l).map(|_| rng.uniform()).collect(); let s: f64 = w.iter().sum(); w.iter().map(|x| x / s).collect() }).collect();
            net.routing = Routing::Stochastic(p);
        }
        net.event_cap = 2000;
        let table = random_table(&mut rng, net.len(), 2);
        let theta = random_theta(&mut rng, 2);
        let trace = simulate_queueing(&net, &table, &theta, &mut Replication::new(seed, 0));
        for records in &trace.services {
            for (j, r) in records.iter().enumerate() {
                prop_assert!(r.alpha <= r.beta && r.beta <= r.delta);
                prop_assert_eq!(r.delta, r.beta + r.tau);
                let prev = if j == 0 { f64::NEG_INFINITY } else { records[j - 1].delta };
                prop_assert_eq!(r.beta, r.alpha.max(prev).max(0.0));
            }
        }
        let customers: usize = net.initial.iter().sum();
        let mut present = 0usize;
        for r in 0..net.len() {
            let arrivals = net.initial[r] + trace.routing.iter().filter(|x| x.2 == r).count();
            prop_assert!(arrivals >= trace.services[r].len());
            present += arrivals - trace.services[r].len();
        }
        let in_flight = usize::from(trace.status == Status::Completed);
        prop_assert_eq!(present + in_flight, customers);
        if let Routing::Deterministic(t) = &net.routing {
            for &(i, j, r) in &trace.routing {
                prop_assert_eq!(t.destination(i, j), r);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_traces(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let Some(mut net) = random_queueing(&mut rng) else { return Ok(()) };
        net.event_cap = 2000;
        let table = random_table(&mut rng, net.len(), 2);
        let theta = random_theta(&mut rng, 2);
        let a = simulate_queueing(&net, &table, &theta, &mut Replication::new(seed, 3));
        let b = simulate_queueing(&net, &table, &theta, &mut Replication::new(seed, 3));
        prop_assert_eq!(a, b);
        let dag = random_dag(&mut rng, DagKind::Activity);
        let table = random_table(&mut rng, dag.len(), 2);
        let x = simulate_activity(&dag, &table, &theta, &mut Replication::new(seed, 4));
        let y = simulate_activity(&dag, &table, &theta, &mut Replication::new(seed, 4));
        prop_assert_eq!(x, y);
        let z = simulate_reliability(&dag, &table, &theta, &mut Replication::new(seed, 4));
        prop_assert_eq!(z.1.len(), dag.len());
    }

    #[test]
    fn certificate_ignores_table_order(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut table = random_table(&mut rng, 5, 2);
        let bx = ThetaBox::new(vec![0.5, 0.5], vec![2.0, 2.0]);
        if rng.below(2) == 0 {
            table[1].stream = table[3].stream;
        }
        let first = check_dclass(&table, &bx, &MeasureKind::Plain);
        prop_assert_eq!(&first, &check_dclass(&table, &bx, &MeasureKind::Plain));
        table.reverse();
        prop_assert_eq!(first, check_dclass(&table, &bx, &MeasureKind::Plain));
    }

    #[test]
    fn average_time_gradient_is_mean_of_customer_gradients(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let Some(net) = random_queueing(&mut rng) else { return Ok(()) };
        let table = random_table(&mut rng, net.len(), 2);
        let theta = random_theta(&mut rng, 2);
        let mut capped: QueueingNetwork = net.clone();
        capped.event_cap = 2000;
        let Ok(g) = ipa_queueing_measures(&capped, &table, &theta, &mut Replication::new(seed, 0)) else { return Ok(()) };
        let m = g.customers.len() as f64;
        for k in 0..2 {
            let mean: f64 = g.customers.iter().map(|c| c.delta[k] - c.alpha[k]).sum::<f64>() / m;
            prop_assert!((mean - g.t[k]).abs() <= 1e-12 * (1.0 + mean.abs()));
        }
    }
}

#[test]
fn continuous_variates_produce_no_ties() {
    // Figure-1 topology with exponential durations: the two branch points
    // (node 4 and node 6 fathers) never tie.
    let mut rng = Rng::new(77);
    let table = random_table(&mut rng, 6, 2);
    let arcs = [(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (3, 5), (4, 5)];
    let dag = stochnet::networks::Dag::new(6, &arcs).unwrap();
    let net = stochnet::networks::DagNetwork::new(DagKind::Activity, dag, (0..6).collect()).unwrap();
    let theta = [1.0, 1.5];
    let mut ties = 0;
    for i in 0..100_000 {
        let (_, t) = simulate_activity(&net, &table, &theta, &mut Replication::new(5, i));
        if t[1] == t[2] || t[3] == t[4] {
            ties += 1;
        }
    }
    assert_eq!(ties, 0);
}

#[test]
fn routing_table_is_periodic() {
    let t = RoutingTable::new(vec![vec![1, 0, 2]]);
    let got: Vec<usize> = (1..=7).map(|j| t.destination(0, j)).collect();
    assert_eq!(got, vec![1, 0, 2, 1, 0, 2, 1]);
}
