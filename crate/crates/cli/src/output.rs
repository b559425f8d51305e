use std::fs;
use std::io;
use std::path::Path;

/// Writes every file or none: contents go to hidden temporaries first and are
/// renamed into place only after all writes succeed.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> io::Result<()> {
    let created = !dir.exists();
    fs::create_dir_all(dir)?;
    let temp = |name: &str| dir.join(format!(".{name}.partial"));
    let mut written = Vec::new();
    let result = files.iter().try_for_each(|(name, bytes)| {
        fs::write(temp(name), bytes)?;
        written.push(temp(name));
        Ok(())
    });
    let result = result.and_then(|()| files.iter().try_for_each(|(name, _)| fs::rename(temp(name), dir.join(name))));
    if result.is_err() {
        for t in written {
            let _ = fs::remove_file(t);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}
