use url::Url;

/// Canonical form used for result deduplication: lowercase scheme and host,
/// no fragment, no trailing slash, query string kept.
pub fn normalize_url(raw: &str) -> Option<String> {
    let parsed = Url::parse(raw.trim()).ok()?;
    let host = parsed.host_str()?.to_lowercase();
    let mut out = format!("{}://{}", parsed.scheme(), host);
    if let Some(port) = parsed.port() {
        out.push_str(&format!(":{port}"));
    }
    out.push_str(parsed.path().trim_end_matches('/'));
    if let Some(q) = parsed.query() {
        out.push('?');
        out.push_str(q);
    }
    Some(out)
}

pub fn is_valid_url(raw: &str) -> bool {
    matches!(Url::parse(raw.trim()), Ok(u) if u.host_str().is_some() && matches!(u.scheme(), "http" | "https"))
}

pub fn url_host(raw: &str) -> Option<String> {
    Url::parse(raw.trim())
        .ok()?
        .host_str()
        .map(|h| h.to_lowercase())
}
