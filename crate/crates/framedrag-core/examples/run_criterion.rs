//! Dev helper: run a single acceptance criterion, e.g.
//! `cargo run --release -p framedrag-core --example run_criterion -- 1`.

use framedrag_core::acceptance;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let id: u8 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let quick = args.iter().any(|a| a == "--quick");
    let report = match id {
        1 => acceptance::criterion_1(quick),
        2 => acceptance::criterion_2(quick),
        3 => acceptance::criterion_3(quick),
        4 => acceptance::criterion_4(quick),
        5 => acceptance::criterion_5(quick),
        6 => acceptance::criterion_6(quick),
        7 => acceptance::criterion_7(quick),
        8 => acceptance::criterion_8(quick),
        9 => acceptance::criterion_9(quick),
        _ => {
            eprintln!("unknown criterion {id}");
            std::process::exit(2);
        }
    };
    match report {
        Ok(r) => {
            println!("{}", r.line());
            std::process::exit(if r.passed { 0 } else { 1 });
        }
        Err(e) => {
            eprintln!("criterion {id} errored: {e}");
            std::process::exit(3);
        }
    }
}
