use clusterforge::cli::{exit_code, main_with_args, threads_from_env};

fn main() {
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global thread pool");
    }
    std::process::exit(main_with_args(std::env::args_os()));
}
