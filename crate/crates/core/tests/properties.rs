use pec_core::device::{Device, DeviceSpec, ExperimentalSetting, PauliModel, QubitModel};
use pec_core::gst::{
    design_experiments, fit_single_qubit, likelihood, observations, GstDataset, GstOptions, VarianceModel,
};
use pec_core::linalg::Matrix;
use pec_core::pauli::{ideal_ptm, Gate1, GateLabel, ObservableVector, PauliChannel, PauliLabel, PauliVector};
use pec_core::pec::{estimate_mitigated, exact_mitigated, ideal_expectation};
use pec_core::qpd::{sequence_cost, DecompositionSet};
use pec_core::rb::{fit_decay, generate_sequences, DecayModel, RbPoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_channel(n: usize) -> impl Strategy<Value = PauliChannel> {
    let dim = 1usize << (2 * n);
    proptest::collection::vec(0.0f64..0.02 / dim as f64, dim - 1).prop_map(move |errs| {
        let mut rates = vec![1.0 - errs.iter().sum::<f64>()];
        rates.extend(errs);
        PauliChannel::new(n, rates).unwrap()
    })
}

fn qubit_model() -> impl Strategy<Value = QubitModel> {
    (
        proptest::collection::vec(small_channel(1), 11),
        -0.05f64..0.05,
        -0.05f64..0.05,
        0.97f64..=1.0,
    )
        .prop_map(|(channels, x, y, shrink)| {
            let z = (1.0 - x * x - y * y).sqrt();
            QubitModel {
                prep: [x * shrink, y * shrink, z * shrink],
                gates: Gate1::ALL.into_iter().zip(channels).collect(),
            }
        })
}

fn one_qubit_model() -> impl Strategy<Value = PauliModel> {
    qubit_model().prop_map(|q| PauliModel {
        qubits: vec![q],
        ms_yy: None,
    })
}

fn two_qubit_model() -> impl Strategy<Value = PauliModel> {
    (qubit_model(), qubit_model(), small_channel(2)).prop_map(|(a, b, ms)| PauliModel {
        qubits: vec![a, b],
        ms_yy: Some(ms),
    })
}

fn check_decompositions(model: &PauliModel) -> Result<(), TestCaseError> {
    let n = model.n();
    let set = DecompositionSet::from_model(model, None).unwrap();
    let basis: Vec<Matrix<f64>> = (0..1usize << (2 * n))
        .map(|j| model.gate_ptm(&GateLabel::pauli_gate(n, j).unwrap()).unwrap().into_matrix())
        .collect();
    let dim = basis[0].rows();
    for (g, q) in &set.gates {
        let mut mix = Matrix::zeros(dim, dim);
        for (w, b) in q.coefficients.iter().zip(&basis) {
            mix = mix.add(&b.scale(*w)).unwrap();
        }
        let experimental = model.gate_ptm(g).unwrap();
        let rebuilt = mix.matmul(experimental.matrix()).unwrap();
        let ideal = ideal_ptm::<f64>(g);
        prop_assert!(rebuilt.max_abs_diff(ideal.matrix()).unwrap() < 1e-9, "{g}");
    }
    for q in set.gates.values().chain(std::iter::once(&set.state)) {
        prop_assert!((q.sum() - 1.0).abs() < 1e-10);
        prop_assert!(q.one_norm >= 1.0 - 1e-12);
        let all_positive = q.coefficients.iter().all(|&c| c >= 0.0);
        prop_assert_eq!(all_positive, (q.one_norm - 1.0).abs() < 1e-12);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_qubit_decompositions_rebuild_the_ideal_gates(model in one_qubit_model()) {
        check_decompositions(&model)?;
    }

    #[test]
    fn two_qubit_decompositions_rebuild_the_ideal_gates(model in two_qubit_model()) {
        check_decompositions(&model)?;
    }

    #[test]
    fn sequence_cost_matches_brute_force(model in one_qubit_model(), gates in proptest::collection::vec(0usize..11, 1..=3)) {
        let set = DecompositionSet::from_model(&model, None).unwrap();
        let labels: Vec<GateLabel> = gates.iter().map(|&g| GateLabel::One(Gate1::ALL[g])).collect();
        let cost = set.cost(&labels).unwrap();
        let qs: Vec<&[f64]> = std::iter::once(set.state.coefficients.as_slice())
            .chain(labels.iter().map(|g| set.get(g).unwrap().coefficients.as_slice()))
            .collect();
        let mut brute = 0.0;
        let total: usize = qs.iter().map(|q| q.len()).product();
        for mut k in 0..total {
            let mut w = 1.0;
            for q in &qs {
                w *= q[k % q.len()];
                k /= q.len();
            }
            brute += f64::abs(w);
        }
        prop_assert!((brute - cost.total_c).abs() < 1e-12 * brute);
        prop_assert!(cost.total_c >= 1.0 - 1e-12);
        let per: Vec<&pec_core::qpd::QuasiDecomposition> = labels.iter().map(|g| set.get(g).unwrap()).collect();
        prop_assert_eq!(sequence_cost(&set.state, &per).total_c, cost.per_element.iter().product::<f64>());
    }

    #[test]
    fn enumeration_is_unbiased_under_matching_characterization(model in one_qubit_model(), length in 2usize..=3, seed in any::<u64>()) {
        let device = Device::new(DeviceSpec::from_model("random", model.clone())).unwrap();
        let set = DecompositionSet::from_model(&model, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = generate_sequences(1, length, 1, &mut rng).unwrap().remove(0);
        let gates = seq.gates();
        let ideal = ideal_expectation(1, &gates).unwrap();
        prop_assert_eq!(ideal, seq.ideal_outcome);
        prop_assert!((exact_mitigated(&device, &gates, &set).unwrap() - ideal).abs() < 1e-9);
    }

    #[test]
    fn ideal_states_have_definite_pauli_expectations(gates in proptest::collection::vec(0usize..123, 0..8)) {
        let mut state = PauliVector::<f64>::zero_state(2);
        for g in gates {
            state = ideal_ptm::<f64>(&GateLabel::from_dense_index(2, g).unwrap()).apply(&state).unwrap();
        }
        for label in PauliLabel::all(2) {
            let e = state.pauli_expectation(label);
            prop_assert!([-1.0, 0.0, 1.0].iter().any(|v| (e - v).abs() < 1e-12), "{label} {e}");
        }
    }

    #[test]
    fn noisy_states_stay_physical(model in two_qubit_model(), gates in proptest::collection::vec(0usize..123, 0..8)) {
        let mut state = model.prepared_state();
        for g in gates {
            state = model.gate_ptm(&GateLabel::from_dense_index(2, g).unwrap()).unwrap().apply(&state).unwrap();
        }
        prop_assert!((state.entries()[0] - 0.5).abs() < 1e-12);
        prop_assert!(state.norm() <= 1.0 + 1e-12);
        for bits in 0..4 {
            let p = ObservableVector::<f64>::outcome_projector(2, bits).eval(&state).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }
    }

    #[test]
    fn shot_records_are_bounded_and_reproducible(
        model in one_qubit_model(),
        init in 0usize..4,
        meas in 0usize..3,
        gates in proptest::collection::vec(0usize..11, 0..5),
        shots in 1u64..5000,
        stream in any::<u64>(),
    ) {
        let device = Device::new(DeviceSpec::from_model("random", model)).unwrap();
        let labels = gates.iter().map(|&g| GateLabel::One(Gate1::ALL[g])).collect();
        let setting = ExperimentalSetting::new(init, labels, Some(meas), shots);
        let a = device.run_setting(&setting, stream).unwrap();
        let b = device.run_setting(&setting, stream).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.shots(), shots);
        prop_assert!(a.zeros_count() <= shots);
    }

    #[test]
    fn fixed_offset_fit_recovers_exact_decays(p in 0.9f64..0.9999, a in 0.2f64..0.5) {
        let points: Vec<RbPoint> = [1usize, 2, 4, 8, 16, 32]
            .iter()
            .map(|&l| RbPoint { length: l, mean: 0.5 + a * p.powi(l as i32), std_error: 1e-3, n_sequences: 10 })
            .collect();
        let fit = fit_decay(1, &points, DecayModel::default()).unwrap();
        prop_assert!((fit.decay_rate() - (1.0 - p)).abs() < 1e-8, "{} vs {}", fit.decay_rate(), 1.0 - p);
        prop_assert!((fit.error_rate() - (1.0 - p) / 2.0).abs() < 1e-8);
    }

    #[test]
    fn mitigated_estimates_are_clamped_with_positive_error(
        model in one_qubit_model(),
        seed in any::<u64>(),
        circuits in 2usize..40,
        shots in 1u64..50,
    ) {
        let device = Device::new(DeviceSpec::from_model("random", model.clone())).unwrap();
        let set = DecompositionSet::from_model(&model, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = generate_sequences(1, 4, 1, &mut rng).unwrap().remove(0);
        let est = estimate_mitigated(&device, &seq.gates(), &set, circuits, shots, seed).unwrap();
        prop_assert!(est.value.abs() <= est.total_c);
        prop_assert!(est.std_error > 0.0);
    }
}

#[test]
fn fitted_likelihood_is_at_least_the_generating_likelihood() {
    let spec = DeviceSpec::preset("single-qubit-paper").unwrap();
    let settings = design_experiments(1, 10_000).unwrap();
    for seed in 0..3 {
        let device = Device::new(spec.clone().with_seed(seed)).unwrap();
        let data = GstDataset::collect(&device, &settings, 11).unwrap();
        let obs = observations(&data, 0, VarianceModel::default()).unwrap();
        let fit = fit_single_qubit(&data, 0, GstOptions::default()).unwrap();
        let at_truth = likelihood(&spec.model.qubits[0], &obs).unwrap();
        let at_fit = likelihood(&fit.model, &obs).unwrap();
        assert!(at_fit >= at_truth - 1e-9, "seed {seed}: {at_fit} < {at_truth}");
    }
}
