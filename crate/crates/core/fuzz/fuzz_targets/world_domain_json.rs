#![no_main]

use libfuzzer_sys::fuzz_target;
use polenav::world::{DomainView, Pose, World};

// Input: world JSON, a NUL byte, then domain JSON for that world.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(2, |&b| b == 0);
    let Some(Ok(world_text)) = parts.next().map(std::str::from_utf8) else {
        return;
    };
    let Ok(world) = World::from_json(world_text) else {
        return;
    };
    let _ = world.nearest_viewpoint(world.route_length() / 3.0);
    let Some(Ok(domain_text)) = parts.next().map(std::str::from_utf8) else {
        return;
    };
    if let Ok(domain) = DomainView::from_json(domain_text, &world) {
        let _ = domain.render(&world, Pose::new(0.0));
    }
});
