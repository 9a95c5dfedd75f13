//! Trains and writes the MNIST reference run if it is missing or stale.

fn main() {
    match cnnslicer_testkit::reference_run() {
        Ok(dir) => println!("{}", dir.display()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
