fn main() {
    let problem = slq::SlProblem::constant_free(0.0, std::f64::consts::PI).unwrap();
    let vp = slq::validate_problem(&problem).unwrap();
    let u1 = slq::integrate_ivp(&vp, &slq::IvpSpec::new(0.0, 0.0, 1.0, 2.0, std::f64::consts::PI)).unwrap();
    eprintln!("zeros: {:?}", u1.zeros());
    eprintln!("calling second_solution...");
    let res = slq::second_solution(&vp, &u1, 0.5, (0.0, std::f64::consts::PI));
    eprintln!("result: {:?}", res.map(|_| "traj"));
}
