//! Command-line front end (placeholder while the solver modules are built).

pub fn main() -> i32 {
    eprintln!("not yet wired up");
    2
}
