use causal_bias::closed_forms::BinaryParams;
use causal_bias::scm::{
    self, Axis, BinaryInteractionSpec, BinaryMeasurementSpec, ScmSpec, Structure, SweepBias, SweepConfig,
};
use causal_bias::table::JointTable;

fn confounding() -> Structure {
    Structure::BinaryConfounding {
        params: BinaryParams::new(0.9, 0.1, 0.8, 0.2, 0.4, 0.3, 0.5).unwrap(),
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    for s in [
        confounding(),
        scm::Structure::BinaryMeasurement {
            spec: BinaryMeasurementSpec::randomize(3),
        },
    ] {
        let a = scm::simulate(&ScmSpec::new(s.clone(), 5000, 9).unwrap()).unwrap();
        let b = scm::simulate(&ScmSpec::new(s.clone(), 5000, 9).unwrap()).unwrap();
        let c = scm::simulate(&ScmSpec::new(s, 5000, 10).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn enumeration_ignores_seed() {
    let t1 = scm::enumerate_joint(&confounding()).unwrap();
    let t2 = scm::enumerate_joint(&confounding()).unwrap();
    assert_eq!(t1, t2);
    assert!((t1.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn estimated_tables_converge_to_enumeration() {
    let structures = [
        confounding(),
        Structure::BinaryMeasurement {
            spec: BinaryMeasurementSpec::randomize(11),
        },
        Structure::BinaryInteraction {
            spec: BinaryInteractionSpec {
                p_a1: 0.3,
                p_b1: 0.6,
                y_given_ab: [0.1, 0.2, 0.3, 0.8],
            },
        },
    ];
    for s in structures {
        let exact = scm::enumerate_joint(&s).unwrap();
        let data = scm::simulate(&ScmSpec::new(s.clone(), 1_000_000, 42).unwrap()).unwrap();
        let vars: Vec<&str> = exact.variables().iter().map(String::as_str).collect();
        let est = JointTable::from_samples(&data, &vars, 0.0).unwrap();
        let d = est.max_abs_diff(&exact).unwrap();
        assert!(d < 0.005, "{s:?}: {d}");
    }
}

fn conf_sweep(standardized: bool) -> SweepConfig {
    SweepConfig {
        bias: SweepBias::Conf,
        axes: vec![Axis::parse("beta=-1:1:0.1").unwrap(), Axis::parse("gamma=-1:1:0.1").unwrap()],
        hold: 0.5,
        standardized,
    }
}

#[test]
fn confounding_grid_shape() {
    let grid = scm::sweep(&conf_sweep(true)).unwrap();
    assert_eq!(grid.values.len(), 441);
    assert_eq!(grid.to_csv().lines().count(), 442);
    for (coords, v) in grid.coordinates.iter().zip(&grid.values) {
        let (b, g) = (coords[0], coords[1]);
        if b == 0.0 || g == 0.0 {
            assert_eq!(*v, 0.0);
        } else {
            assert_eq!(v.signum(), (b * g).signum(), "{b} {g}");
        }
    }
    assert_eq!(grid.value_at(&[1.0, 1.0]), Some(1.0));
    assert_eq!(grid.value_at(&[-1.0, 1.0]), Some(-1.0));
}

#[test]
fn grid_csv_independent_of_thread_count() {
    let reference = scm::sweep(&conf_sweep(false)).unwrap().to_csv();
    for threads in [1, 2, 5] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let csv = pool.install(|| scm::sweep(&conf_sweep(false)).unwrap().to_csv());
        assert_eq!(csv, reference, "{threads} threads");
    }
}

#[test]
fn useless_proxy_leaves_confounding_bias() {
    let conf = scm::sweep(&conf_sweep(false)).unwrap();
    let meas = scm::sweep(&SweepConfig {
        bias: SweepBias::Meas,
        axes: vec![
            Axis::parse("beta=-1:1:0.1").unwrap(),
            Axis::parse("gamma=-1:1:0.1").unwrap(),
            Axis::parse("lambda=0:0:1").unwrap(),
        ],
        hold: 0.5,
        standardized: false,
    })
    .unwrap();
    assert_eq!(meas.values.len(), conf.values.len());
    for (m, c) in meas.values.iter().zip(&conf.values) {
        assert!((m - c).abs() < 1e-15);
    }
}

#[test]
fn slices_cover_every_parameter() {
    let csv = scm::slices_csv(&conf_sweep(false), -1.0).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("parameter,value,bias"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 42);
    assert!(rows.iter().any(|r| r.starts_with("beta,") && r.ends_with(",0")));
}

#[test]
fn invalid_sweeps_rejected() {
    assert!(Axis::parse("beta=1:-1:0.1").is_err());
    assert!(Axis::parse("beta").is_err());
    let mut c = conf_sweep(false);
    c.axes.push(Axis::parse("lambda=0:1:0.5").unwrap());
    assert!(scm::sweep(&c).is_err());
}
