use ndarray::Array2;
use tihdp::nets::{
    critic_forward, gradient_check, hi_actor_forward, init_params, lo_actor_forward, load_checkpoint, save_checkpoint,
    ActionDistribution, Checkpoint, CheckpointManifest, GradCheckConfig, ParamSet, RecurrentState, TensorEntry,
    Tensors,
};
use tihdp::obs::ObsConfig;
use tihdp::trainer::Variant;

fn full_spec(variant: Variant) -> tihdp::nets::NetSpec {
    variant.net_spec(&ObsConfig::default(), &[256, 128, 64], 64, 3, 4)
}

fn probe(dim: usize, phase: f64) -> Vec<f64> {
    (0..dim).map(|k| (0.37 * k as f64 + phase).sin()).collect()
}

fn probs(d: &ActionDistribution) -> Vec<f64> {
    match d {
        ActionDistribution::Bernoulli { probs, .. } | ActionDistribution::Categorical { probs } => probs.clone(),
        ActionDistribution::MoveTurn { moves, turns } => moves.iter().chain(turns).copied().collect(),
    }
}

#[test]
fn full_size_gradients_match_finite_differences() {
    for (k, variant) in Variant::ALL.into_iter().cycle().take(5).enumerate() {
        let report = gradient_check(&full_spec(variant), 100 + k as u64, &GradCheckConfig::default());
        for t in &report.tensors {
            assert!(t.checked > 0, "{} checked nothing", t.name);
            assert!(t.max_rel_error < 1e-4, "{variant} {}: {:.3e}", t.name, t.max_rel_error);
        }
        let names: Vec<&str> = report.tensors.iter().map(|t| t.name.as_str()).collect();
        for prefix in ["hi_actor.", "lo_actor.", "hi_critic.", "lo_critic."] {
            assert!(names.iter().any(|n| n.starts_with(prefix)), "{prefix} not covered");
        }
    }
}

fn to_checkpoint(params: &ParamSet<f32>) -> Checkpoint {
    let tensors = params.tensors();
    Checkpoint {
        manifest: CheckpointManifest {
            format_version: 1,
            tensors: tensors.iter().map(|(name, shape, _)| TensorEntry { name: name.clone(), shape: shape.clone() }).collect(),
            meta: serde_json::json!({ "spec": params.spec }),
        },
        data: tensors.iter().map(|(_, _, d)| d.to_vec()).collect(),
    }
}

fn from_checkpoint(ckpt: &Checkpoint, like: &ParamSet<f32>) -> ParamSet<f32> {
    let mut out = ParamSet::zeros(&like.spec);
    for (dst, src) in out.tensors_mut().into_iter().zip(&ckpt.data) {
        dst.copy_from_slice(src);
    }
    out
}

#[test]
fn save_load_forward_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = full_spec(Variant::TihdpWithCom);
    let params: ParamSet<f32> = init_params(&spec, 9);
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&path, &to_checkpoint(&params)).unwrap();
    let loaded = from_checkpoint(&load_checkpoint(&path).unwrap(), &params);

    let obs = probe(spec.hi_input_dim, 0.3);
    let mask = vec![true; spec.hi_head.logits()];
    let state = RecurrentState::zeros(1, spec.lstm_width);
    let (a, sa) = hi_actor_forward(&params, &obs, &mask, &state).unwrap();
    let (b, sb) = hi_actor_forward(&loaded, &obs, &mask, &state).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let lo = probe(spec.lo_input_dim, 1.1);
    assert_eq!(lo_actor_forward(&params, &lo).unwrap(), lo_actor_forward(&loaded, &lo).unwrap());
    let g = probe(spec.hi_critic_input_dim, 2.0);
    assert_eq!(
        critic_forward(&params.hi_critic, &g, &[]).unwrap().to_bits(),
        critic_forward(&loaded.hi_critic, &g, &[]).unwrap().to_bits()
    );
}

#[test]
fn reset_state_forgets_history() {
    let spec = full_spec(Variant::TihdpWithCom);
    let params: ParamSet<f64> = init_params(&spec, 4);
    let mask = vec![true; spec.hi_head.logits()];
    let zero = RecurrentState::zeros(1, spec.lstm_width);
    let fresh = hi_actor_forward(&params, &probe(spec.hi_input_dim, 0.0), &mask, &zero).unwrap();

    let mut state = zero.clone();
    for t in 0..10 {
        state = hi_actor_forward(&params, &probe(spec.hi_input_dim, t as f64), &mask, &state).unwrap().1;
    }
    assert_ne!(state, zero);
    state.reset_row(0);
    assert_eq!(state, zero);
    let after = hi_actor_forward(&params, &probe(spec.hi_input_dim, 0.0), &mask, &state).unwrap();
    assert_eq!(fresh, after);
}

#[test]
fn recurrent_state_carries_information() {
    let spec = full_spec(Variant::TihdpWithCom);
    let params: ParamSet<f64> = init_params(&spec, 4);
    let mask = vec![true; spec.hi_head.logits()];
    let zero = RecurrentState::zeros(1, spec.lstm_width);
    let warm = hi_actor_forward(&params, &probe(spec.hi_input_dim, 5.0), &mask, &zero).unwrap().1;
    let x = probe(spec.hi_input_dim, 0.0);
    let cold = probs(&hi_actor_forward(&params, &x, &mask, &zero).unwrap().0.unwrap());
    let hot = probs(&hi_actor_forward(&params, &x, &mask, &warm).unwrap().0.unwrap());
    assert!(cold.iter().zip(&hot).any(|(a, b)| a != b));
}

#[test]
fn batched_rows_are_independent() {
    let spec = full_spec(Variant::TihdpWithCom);
    let params: ParamSet<f64> = init_params(&spec, 2);
    let a = probe(spec.lo_input_dim, 0.0);
    let b = probe(spec.lo_input_dim, 3.0);
    let both = Array2::from_shape_fn((2, a.len()), |(r, c)| if r == 0 { a[c] } else { b[c] });
    let batched = params.lo_actor.logits(&both).unwrap();
    let single = params.lo_actor.logits(&Array2::from_shape_fn((1, a.len()), |(_, c)| a[c])).unwrap();
    assert_eq!(batched.row(0), single.row(0));
}
