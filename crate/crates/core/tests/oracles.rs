//! Analytic derivatives against finite-difference oracles.

mod common;

use common::{fd_gradient, rel_err, rng, uniform_point};
use dualgap::dg::dg_estimate;
use dualgap::games::{second_order, second_order_fd, CATALOG};
use dualgap::optimizers::unrolled_leader_grad;
use dualgap::{parse_game, DgConfig, Game, GradMode, JointPoint, Vector};

const FD_STEP: f64 = 1e-5;

fn catalog() -> Vec<(Box<dyn Game>, f64)> {
    // (game, half-width of the sampling box)
    let mut games: Vec<(Box<dyn Game>, f64)> = CATALOG
        .iter()
        .map(|name| {
            let half = match *name {
                "motivation" => 9.5,
                "f3" => 3.0,
                _ => 2.0,
            };
            (parse_game(name).unwrap(), half)
        })
        .collect();
    games.push((parse_game("bilinear:c=10").unwrap(), 2.0));
    games.push((parse_game("ncnc:c=3,sep=1").unwrap(), 4.0));
    games
}

fn value_at(game: &dyn Game, dim_u: usize) -> impl Fn(&Vector) -> f64 + '_ {
    move |x: &Vector| {
        let p = JointPoint::from_flat(x, dim_u);
        game.value(&p.u, &p.v)
    }
}

#[test]
fn catalog_gradients_match_central_differences() {
    for (game, half) in catalog() {
        let mut r = rng(&format!("grad-check/{}", game.name()));
        for _ in 0..100 {
            let p = uniform_point(&mut r, game.dim_u(), game.dim_v(), -half, half);
            let (gu, gv) = game.grads(&p.u, &p.v);
            let analytic = JointPoint::new(gu, gv).flatten();
            let fd = fd_gradient(value_at(game.as_ref(), game.dim_u()), &p.flatten(), FD_STEP);
            let err = rel_err(&analytic, &fd, 1e-2);
            assert!(err <= 1e-6, "{} at {:?}: rel err {err:e}", game.name(), p.to_vec());
        }
    }
}

#[test]
fn oracles_are_pure() {
    for (game, half) in catalog() {
        let mut r = rng(&format!("purity/{}", game.name()));
        let p = uniform_point(&mut r, game.dim_u(), game.dim_v(), -half, half);
        assert_eq!(game.value(&p.u, &p.v).to_bits(), game.value(&p.u, &p.v).to_bits());
        assert_eq!(game.grads(&p.u, &p.v), game.grads(&p.u, &p.v));
        assert_eq!(game.hessian_blocks(&p.u, &p.v), game.hessian_blocks(&p.u, &p.v));
    }
}

#[test]
fn mixed_blocks_are_transposes() {
    for (game, half) in catalog() {
        let mut r = rng(&format!("transpose/{}", game.name()));
        for _ in 0..10 {
            let p = uniform_point(&mut r, game.dim_u(), game.dim_v(), -half, half);
            let h = second_order(game.as_ref(), &p);
            assert!((&h.uv - h.vu.transpose()).amax() <= 1e-9, "{}", game.name());
        }
    }
}

#[test]
fn closed_form_hessians_match_fd() {
    for name in ["f1", "f2", "bilinear:c=3"] {
        let game = parse_game(name).unwrap();
        let mut r = rng(&format!("hessian/{name}"));
        for _ in 0..20 {
            let p = uniform_point(&mut r, 1, 1, -2.0, 2.0);
            let closed = game.hessian_blocks(&p.u, &p.v).unwrap().full();
            let fd = second_order_fd(game.as_ref(), &p, 1e-5).full();
            assert!((closed - fd).amax() <= 1e-6, "{name}");
        }
    }
}

#[test]
fn f3_fd_hessian_matches_double_difference_of_value() {
    let game = parse_game("f3").unwrap();
    let p = JointPoint::scalar(0.0, 0.0);
    let blocks = second_order(game.as_ref(), &p).full();
    // Second differences of the value alone, independent of the gradient.
    let h = 1e-3;
    let f = |x: f64, y: f64| game.value(&Vector::from_element(1, x), &Vector::from_element(1, y));
    let fxx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
    let fyy = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
    let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
    let oracle = [[fxx, fxy], [fxy, fyy]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((blocks[(i, j)] - oracle[i][j]).abs() <= 1e-4, "({i},{j}): {} vs {}", blocks[(i, j)], oracle[i][j]);
        }
    }
}

fn composed_gap<'a>(game: &'a dyn Game, cfg: &DgConfig) -> impl Fn(&Vector) -> f64 + 'a {
    let cfg = cfg.clone();
    move |x: &Vector| dg_estimate(game, &JointPoint::from_flat(x, game.dim_u()), &cfg).unwrap().value
}

#[test]
fn unrolled_gap_gradient_matches_fd_of_composed_map() {
    let cases = [("f1", 1, 0.05, 1.0), ("f1", 10, 0.05, 1.0), ("f3", 1, 0.05, 2.0), ("f3", 10, 0.02, 2.0), ("motivation", 5, 0.002, 5.0)];
    for (name, k, gamma, half) in cases {
        let game = parse_game(name).unwrap();
        let cfg = DgConfig::new(k, gamma, GradMode::Unrolled);
        let mut r = rng(&format!("unrolled-fd/{name}/{k}"));
        for _ in 0..50 {
            let p = uniform_point(&mut r, 1, 1, -half, half);
            let analytic = dg_estimate(game.as_ref(), &p, &cfg).unwrap().grad();
            let fd = fd_gradient(composed_gap(game.as_ref(), &cfg), &p.flatten(), FD_STEP);
            let err = rel_err(&analytic, &fd, 1e-3);
            assert!(err <= 1e-5, "{name} k={k} at {:?}: rel err {err:e}", p.to_vec());
        }
    }
}

#[test]
fn unrolled_leader_gradient_matches_fd() {
    let game = parse_game("f1").unwrap();
    let (eta, k) = (0.05, 10);
    let mut r = rng("leader-fd/f1");
    for _ in 0..50 {
        let p = uniform_point(&mut r, 1, 1, -1.0, 1.0);
        let analytic = unrolled_leader_grad(game.as_ref(), &p, k, eta, true).unwrap();
        // u -> M(u, y_k(u)) with the follower unrolled from v.
        let leader = |u: &Vector| {
            let mut y = p.v.clone();
            for _ in 0..k {
                y += game.grad_v(u, &y) * eta;
            }
            game.value(u, &y)
        };
        let fd = fd_gradient(leader, &p.u, FD_STEP);
        assert!(rel_err(&analytic, &fd, 1e-3) <= 1e-6, "at {:?}", p.to_vec());
    }
}
