# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from setuptools import find_packages, setup

setup(
    name="privateequilibria",
    version="0.1.0",
    description="Jointly differentially private correlated equilibria of large games",
    long_description=open("README.md", encoding="utf-8").read() if __import__("pathlib").Path("README.md").exists() else "",
    long_description_content_type="text/markdown",
    author="privateequilibria Team",
    license="Apache-2.0",
    packages=find_packages(where=".", include=["privateequilibria*"]),
    package_dir={"": "."},
    python_requires=">=3.10",
    install_requires=[
        "jsonlines>=4.0.0",
        "numpy>=1.24",
        "pandas>=2.0",
        "pydantic>=2.0",
        "pyyaml>=6.0",
        "scipy>=1.10",
        "tqdm>=4.66",
    ],
    extras_require={"test": ["pytest>=7.4"]},
    entry_points={"console_scripts": ["privateequilibria = privateequilibria.utils.cli:main"]},
    include_package_data=True,
)
