use mixopt_demo::{gp_slice_json, kernel_profile_json, slice_variables, solver_trace_json};

#[test]
fn kernel_profile_has_unit_diagonal_and_decays() {
    let j = kernel_profile_json(0.3, 0.4, 1.5, 4);
    let curve = j["continuous"].as_array().unwrap();
    assert_eq!(curve[0][1].as_f64().unwrap(), 1.0);
    let ys: Vec<f64> = curve.iter().map(|p| p[1].as_f64().unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[1] <= w[0]));
    for key in ["nominal", "ordinal"] {
        let m = j[key].as_array().unwrap();
        assert_eq!(m.len(), 4);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row[i].as_f64().unwrap(), 1.0);
            for (k, v) in row.as_array().unwrap().iter().enumerate() {
                assert_eq!(v.as_f64(), m[k][i].as_f64());
            }
        }
    }
    assert_eq!(j["nominal"][0][1].as_f64().unwrap(), 0.4);
}

#[test]
fn gp_slice_interpolates_its_samples() {
    for var in slice_variables() {
        let j = gp_slice_json(&var, 6, 0.2, 0.1).unwrap();
        let grid = j["grid"].as_array().unwrap();
        assert!(grid.iter().all(|g| g["ei"].as_f64().unwrap() >= 0.0));
        assert!(grid.iter().all(|g| g["sd"].as_f64().unwrap() >= 0.0));
        assert!(!j["samples"].as_array().unwrap().is_empty(), "{var}");
    }
    assert!(gp_slice_json("nope", 6, 0.2, 0.1).is_err());
}

#[test]
fn solver_traces_are_monotone() {
    for solver in ["direct", "bo", "random"] {
        let j = solver_trace_json("toy", solver, 40, 1).unwrap();
        let steps = j["steps"].as_array().unwrap();
        assert!(!steps.is_empty() && steps.len() <= 40);
        let best: Vec<f64> = steps.iter().filter_map(|s| s["best"].as_f64()).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]), "{solver}");
        assert!(j["best_point"].is_object());
    }
    assert!(solver_trace_json("toy", "annealing", 10, 0).is_err());
    assert!(solver_trace_json("nope", "direct", 10, 0).is_err());
}
