"""Build the CSV files under ``data/`` from copies bundled inside PyPI wheels.

The benchmark never downloads anything; this script documents where the
committed CSVs came from and can regenerate them in an environment that
can reach a PyPI mirror::

    python scripts/prepare_datasets.py --out data

Sources (all fetched with ``pip download --no-deps``):

* Diabetes (Pima Indians, 768 rows): ``imbalanced_databases`` KEEL copy
* Breast Cancer (WDBC, 569 rows): ``sklearn.datasets.load_breast_cancer``
* Adult (UCI train split): ``mglearn`` ``data/adult.data``; rows with a
  ``?`` cell are dropped because the loader does no imputation
* COMPAS (ProPublica two-year file, 7214 rows): ``responsibly``
* German Credit (1000 rows): ``responsibly`` ``german.data``
"""
from __future__ import annotations

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path


def _wheel(package: str, workdir: Path) -> zipfile.ZipFile:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         "-d", str(workdir), package],
        check=True, capture_output=True,
    )
    stem = package.replace("-", "_").lower()
    for path in workdir.glob("*.whl"):
        if path.name.lower().startswith(stem):
            return zipfile.ZipFile(path)
    raise FileNotFoundError(f"no wheel for {package} in {workdir}")


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"{path}: {len(rows)} rows")


def diabetes(out: Path, work: Path) -> None:
    wheel = _wheel("imbalanced-databases", work)
    text = wheel.read("imbalanced_databases/data/pima/pima.dat").decode()
    header = ["Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin",
              "BMI", "DiabetesPedigreeFunction", "Age", "Outcome"]
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("@"):
            continue
        *values, label = [v.strip() for v in line.split(",")]
        rows.append(values + ["1" if label == "positive" else "0"])
    _write(out / "diabetes.csv", header, rows)


def breast_cancer(out: Path) -> None:
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    header = [name.replace(" ", "_") for name in bunch.feature_names] + ["diagnosis"]
    rows = [[repr(float(v)) for v in row] + ["benign" if t == 1 else "malignant"]
            for row, t in zip(bunch.data, bunch.target)]
    _write(out / "breast_cancer.csv", header, rows)


def adult(out: Path, work: Path) -> None:
    wheel = _wheel("mglearn", work)
    text = wheel.read("mglearn/data/adult.data").decode()
    names = ["age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
             "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
             "hours_per_week", "native_country", "income"]
    keep = ["age", "workclass", "education", "marital_status", "occupation", "relationship",
            "race", "sex", "capital_gain", "capital_loss", "hours_per_week", "native_country",
            "income"]
    rows = []
    for line in text.splitlines():
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(names) or "?" in cells:
            continue
        record = dict(zip(names, cells))
        rows.append([record[k] for k in keep])
    _write(out / "adult.csv", keep, rows)


def compas(out: Path, work: Path) -> None:
    wheel = _wheel("responsibly", work)
    reader = csv.DictReader(io.StringIO(
        wheel.read("responsibly/dataset/compas/compas-scores-two-years.csv").decode()))
    keep = ["sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
            "juv_other_count", "priors_count", "c_charge_degree", "score_text",
            "v_score_text", "two_year_recid"]
    rows = [[r[k] for k in keep] for r in reader]
    _write(out / "compas.csv", keep, rows)


def german(out: Path, work: Path) -> None:
    wheel = _wheel("responsibly", work)
    text = wheel.read("responsibly/dataset/german/german.data").decode()
    header = ["status", "duration", "credit_history", "purpose", "credit_amount", "savings",
              "employment", "installment_rate", "personal_status_sex", "other_debtors",
              "residence_since", "property", "age", "installment_plans", "housing",
              "existing_credits", "job", "people_liable", "telephone", "foreign_worker",
              "credit"]
    rows = []
    for line in text.splitlines():
        cells = line.split()
        cells[-1] = "good" if cells[-1] == "1" else "bad"
        rows.append(cells)
    _write(out / "german.csv", header, rows)


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data"))
    args = parser.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        diabetes(args.out, work)
        breast_cancer(args.out)
        adult(args.out, work)
        compas(args.out, work)
        german(args.out, work)


if __name__ == "__main__":
    main()
