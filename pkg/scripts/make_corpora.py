"""Regenerate the bundled mock-repository corpora (deterministic)."""

import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "dcat_converter" / "fixtures" / "corpora"

REPOS = {
    "mock-tu": dict(
        host="depositonce.tu-berlin.de", handle="11303", publisher="Technische Universität Berlin",
        variant="standard", langs=(None,), base=datetime(2024, 1, 8, 9, 0, tzinfo=timezone.utc),
    ),
    "mock-hu": dict(
        host="edoc.hu-berlin.de", handle="18452", publisher="Humboldt-Universität zu Berlin",
        variant="standard", langs=("en", "de"), base=datetime(2024, 2, 12, 7, 30, tzinfo=timezone.utc),
    ),
    "mock-fu": dict(
        host="refubium.fu-berlin.de", handle="fub188", publisher="Freie Universität Berlin",
        variant="abstract-variant", langs=("en", None), base=datetime(2024, 3, 4, 13, 15, tzinfo=timezone.utc),
    ),
}

TOPICS = [
    "catalysis", "heterogeneous catalysis", "zeolites", "reaction kinetics", "machine learning",
    "research data management", "FAIR principles", "metadata", "climate modelling", "neuroscience",
    "proteomics", "urban history", "linguistics", "materials science", "photochemistry",
]
NAMES = [
    "Müller, Anna", "Schmidt, Jonas", "Nguyen, Linh", "Kowalski, Piotr", "Öztürk, Elif",
    "García, Lucía", "Chen, Wei", "Johansson, Erik", "Okafor, Chidi", "Dubois, Camille",
]
TYPES = ["Dataset", "Text", "Image", "Sound", "MovingImage"]
FORMATS = ["application/pdf", "text/csv", "image/tiff", "audio/wav", "video/mp4"]
RIGHTS = ["info:eu-repo/semantics/openAccess", "open access", "https://creativecommons.org/licenses/by/4.0/"]

TITLE_LESS = 13
DELETED = 7


def make_record(name, cfg, i, rng):
    ident = f"oai:{cfg['host']}:{cfg['handle']}/{1000 + i}"
    stamp = (cfg["base"] + timedelta(hours=3 * i, minutes=i)).strftime("%Y-%m-%dT%H:%M:%SZ")
    if i == DELETED:
        return {"identifier": ident, "datestamp": stamp, "deleted": True}
    lang = cfg["langs"][i % len(cfg["langs"])]
    topics = rng.sample(TOPICS, 1 + i % 3)
    if i == 1:
        topics = ["catalysis", "zeolites", "reaction kinetics"]
    fields = []
    if i != TITLE_LESS:
        title = f"{topics[0].capitalize()} study {i} & supplementary data"
        fields.append(["title", title] + ([lang] if lang else []))
        if lang == "en" and i % 4 == 0:
            fields.append(["title", f"Studie {i} zu {topics[0]}", "de"])
    for who in rng.sample(NAMES, 1 + i % 2):
        fields.append(["creator", who])
    for t in topics:
        fields.append(["subject", t])
    desc = f"Research data for {topics[0]} collected at {name} (record {i}).  Values in °C; ratios ≤ 1."
    fields.append(["description", desc] + ([lang] if lang else []))
    fields.append(["publisher", cfg["publisher"]])
    if i % 5 == 0:
        fields.append(["contributor", rng.choice(NAMES)])
    year = 2015 + i % 9
    if i % 6 == 0:
        fields += [["date", f"{year}-05-03"], ["date", "invalid"]]
    elif i % 6 == 1:
        fields.append(["date", str(year)])
    elif i % 6 == 2:
        fields += [["date", f"{year}-11-02T10:00:00Z"], ["date", f"{year - 1}-01-15"]]
    else:
        fields.append(["date", f"{year}-0{1 + i % 9}-1{i % 10}"])
    fields.append(["type", TYPES[i % len(TYPES)]])
    fields.append(["format", FORMATS[i % len(FORMATS)]])
    fields.append(["identifier", f"https://{cfg['host']}/handle/{cfg['handle']}/{1000 + i}"])
    if i % 3 == 0:
        fields.append(["identifier", f"doi:10.{5000 + i}/{name}.{i}"])
    fields.append(["language", ("en", "de", "eng")[i % 3]])
    fields.append(["rights", RIGHTS[i % len(RIGHTS)]])
    if i % 8 == 0:
        fields.append(["relation", f"https://{cfg['host']}/handle/{cfg['handle']}/{900 + i}"])
    return {"identifier": ident, "datestamp": stamp, "variant": cfg["variant"], "fields": fields}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, cfg in REPOS.items():
        rng = random.Random(name)
        corpus = {
            "name": name,
            "page_size": 10,
            "granularity": "YYYY-MM-DDThh:mm:ssZ",
            "protocol_version": "2.0",
            "earliest_datestamp": None,
            "set_spec": None,
            "token_max_uses": None,
            "failures": [],
            "records": [make_record(name, cfg, i, rng) for i in range(1, 26)],
        }
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(corpus, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
