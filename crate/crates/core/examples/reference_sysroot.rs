//! Writes the reference sysroot into the directory given as the only argument.

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).expect("usage: reference_sysroot <dir>");
    depex_core::fixture::reference_sysroot(dir)?;
    Ok(())
}
