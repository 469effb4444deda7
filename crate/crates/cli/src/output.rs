use std::fs;
use std::path::Path;

use crate::failure::Failure;

/// Refuses to replace an existing file unless `force` is set, and creates
/// missing parent directories.
pub fn prepare_file(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::input(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Creates `dir` if needed. A non-empty existing directory needs `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.is_file() {
        return Err(Failure::input(format!(
            "{} is a file, expected a directory",
            dir.display()
        )));
    }
    if dir.is_dir() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Failure::input(format!(
            "{} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes `text` to `path` (guarded) or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str, force: bool) -> Result<(), Failure> {
    match path {
        Some(p) => {
            prepare_file(p, force)?;
            fs::write(p, text)?;
            log::info!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "NaN".into()
    }
}
